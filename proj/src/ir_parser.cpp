#include "irdb/ir_parser.hpp"

#include <cctype>
#include <fstream>
#include <set>
#include <sstream>
#include <unordered_map>
#include <unordered_set>

namespace irdb {

ParseError::ParseError(std::uint32_t l, std::uint32_t c, std::string msg, std::string snip)
    : std::runtime_error(std::to_string(l) + ":" + std::to_string(c) + ": " + msg),
      line(l),
      column(c),
      message(std::move(msg)),
      snippet(std::move(snip)) {}

namespace {

enum class Tok {
  Eof,
  Ident,      // keywords, types, labels, DW_* symbols
  LocalId,    // %name
  GlobalId,   // @name
  MetaId,     // !12
  MetaName,   // !dbg, !DILocation, !llvm.dbg.cu
  Bang,       // lone '!' before '{' or a string
  AttrGroup,  // #0
  Int,
  String,
  CString,    // c"..."
  Punct,
};

struct Token {
  Tok kind = Tok::Eof;
  std::string text;
  TextPos pos;
};

bool isIdentStart(char c) { return std::isalpha(static_cast<unsigned char>(c)) || c == '_' || c == '.' || c == '$'; }
bool isIdentChar(char c) { return std::isalnum(static_cast<unsigned char>(c)) || c == '_' || c == '.' || c == '$'; }
bool isNameChar(char c) { return isIdentChar(c) || c == '-'; }

class Lexer {
 public:
  explicit Lexer(std::string_view src) : src_(src) {}

  std::vector<Token> run() {
    std::vector<Token> out;
    for (;;) {
      skipSpace();
      Token t;
      t.pos = {line_, col_};
      if (i_ >= src_.size()) {
        out.push_back(t);
        return out;
      }
      const char c = src_[i_];
      if (c == '"') {
        t.kind = Tok::String;
        t.text = lexString();
      } else if (c == 'c' && peekChar(1) == '"') {
        advance();
        t.kind = Tok::CString;
        t.text = lexString();
      } else if (c == '%' || c == '@') {
        advance();
        t.kind = c == '%' ? Tok::LocalId : Tok::GlobalId;
        if (i_ < src_.size() && src_[i_] == '"') {
          t.text = lexString();
        } else {
          t.text = lexWhile(isNameChar);
        }
        if (t.text.empty()) fail(t.pos, "expected a name after '" + std::string(1, c) + "'");
      } else if (c == '!') {
        advance();
        if (i_ < src_.size() && std::isdigit(static_cast<unsigned char>(src_[i_]))) {
          t.kind = Tok::MetaId;
          t.text = lexWhile([](char ch) { return std::isdigit(static_cast<unsigned char>(ch)) != 0; });
        } else if (i_ < src_.size() && (isIdentStart(src_[i_]) || src_[i_] == '-')) {
          t.kind = Tok::MetaName;
          t.text = lexWhile(isNameChar);
        } else {
          t.kind = Tok::Bang;
          t.text = "!";
        }
      } else if (c == '#') {
        advance();
        t.kind = Tok::AttrGroup;
        t.text = lexWhile(isIdentChar);
      } else if (std::isdigit(static_cast<unsigned char>(c)) ||
                 (c == '-' && std::isdigit(static_cast<unsigned char>(peekChar(1))))) {
        t.kind = Tok::Int;
        if (c == '-') {
          t.text = "-";
          advance();
        }
        if (src_[i_] == '0' && (peekChar(1) == 'x' || peekChar(1) == 'X')) {
          advance();
          advance();
          t.text += "0x" + lexWhile([](char ch) { return std::isxdigit(static_cast<unsigned char>(ch)) != 0; });
        } else {
          t.text += lexWhile([](char ch) { return std::isdigit(static_cast<unsigned char>(ch)) != 0; });
        }
        // Numeric labels such as `6:` and names like `1.foo` are identifiers.
        if (i_ < src_.size() && isIdentStart(src_[i_]) && src_[i_] != '.') {
          t.kind = Tok::Ident;
          t.text += lexWhile(isIdentChar);
        }
      } else if (c == '.' && peekChar(1) == '.' && peekChar(2) == '.') {
        t.kind = Tok::Punct;
        t.text = "...";
        advance();
        advance();
        advance();
      } else if (isIdentStart(c)) {
        t.kind = Tok::Ident;
        t.text = lexWhile(isIdentChar);
      } else if (std::string_view("=,()[]{}<>*:|").find(c) != std::string_view::npos) {
        t.kind = Tok::Punct;
        t.text = std::string(1, c);
        advance();
      } else {
        fail(t.pos, std::string("unexpected character '") + c + "'");
      }
      out.push_back(std::move(t));
    }
  }

  [[noreturn]] void fail(TextPos pos, const std::string& msg) const {
    throw ParseError(pos.line, pos.column, msg, lineText(src_, pos.line));
  }

  static std::string lineText(std::string_view src, std::uint32_t line) {
    std::uint32_t current = 1;
    std::size_t start = 0;
    for (std::size_t k = 0; k < src.size() && current < line; ++k) {
      if (src[k] == '\n') {
        ++current;
        start = k + 1;
      }
    }
    if (current != line) return {};
    std::size_t end = src.find('\n', start);
    return std::string(src.substr(start, end == std::string_view::npos ? std::string_view::npos : end - start));
  }

 private:
  char peekChar(std::size_t ahead) const { return i_ + ahead < src_.size() ? src_[i_ + ahead] : '\0'; }

  void advance() {
    if (src_[i_] == '\n') {
      ++line_;
      col_ = 1;
    } else {
      ++col_;
    }
    ++i_;
  }

  void skipSpace() {
    while (i_ < src_.size()) {
      const char c = src_[i_];
      if (c == ';') {
        while (i_ < src_.size() && src_[i_] != '\n') advance();
      } else if (std::isspace(static_cast<unsigned char>(c))) {
        advance();
      } else {
        break;
      }
    }
  }

  template <typename Pred>
  std::string lexWhile(Pred pred) {
    std::string out;
    while (i_ < src_.size() && pred(src_[i_])) {
      out += src_[i_];
      advance();
    }
    return out;
  }

  std::string lexString() {
    const TextPos start{line_, col_};
    advance();  // opening quote
    std::string out;
    while (i_ < src_.size() && src_[i_] != '"') {
      if (src_[i_] == '\\') {
        if (peekChar(1) == '\\') {
          out += '\\';
          advance();
          advance();
        } else if (std::isxdigit(static_cast<unsigned char>(peekChar(1))) &&
                   std::isxdigit(static_cast<unsigned char>(peekChar(2)))) {
          out += static_cast<char>(std::stoi(std::string{peekChar(1), peekChar(2)}, nullptr, 16));
          advance();
          advance();
          advance();
        } else {
          fail({line_, col_}, "bad escape in string");
        }
      } else {
        out += src_[i_];
        advance();
      }
    }
    if (i_ >= src_.size()) fail(start, "unterminated string");
    advance();
    return out;
  }

  std::string_view src_;
  std::size_t i_ = 0;
  std::uint32_t line_ = 1;
  std::uint32_t col_ = 1;
};

const std::set<std::string, std::less<>> kValueKeywords = {
    "true", "false", "null", "undef", "poison", "zeroinitializer", "getelementptr", "bitcast", "ptrtoint", "inttoptr"};

const std::set<std::string, std::less<>> kTopLevelKeywords = {"define",     "declare", "attributes", "target",
                                                              "source_filename", "module"};

struct RegisterTable {
  std::unordered_map<std::string, std::uint32_t> slots;
  std::unordered_map<std::string, TextPos> defined;
  std::unordered_map<std::string, TextPos> firstUse;

  Register use(const std::string& name, TextPos pos) {
    firstUse.emplace(name, pos);
    return {name, slotFor(name)};
  }
  std::uint32_t slotFor(const std::string& name) {
    auto [it, inserted] = slots.emplace(name, static_cast<std::uint32_t>(slots.size()));
    return it->second;
  }
};

class Parser {
 public:
  Parser(std::string_view src, std::string origin) : src_(src), toks_(Lexer(src).run()) {
    module_.originName = std::move(origin);
  }

  IrModule run() {
    while (peek().kind != Tok::Eof) parseTopLevel();
    finish();
    return std::move(module_);
  }

 private:
  // -- token helpers ---------------------------------------------------------
  const Token& peek(std::size_t ahead = 0) const {
    const std::size_t k = std::min(i_ + ahead, toks_.size() - 1);
    return toks_[k];
  }
  Token next() {
    Token t = peek();
    if (i_ < toks_.size() - 1) ++i_;
    return t;
  }
  bool isPunct(const char* p, std::size_t ahead = 0) const {
    return peek(ahead).kind == Tok::Punct && peek(ahead).text == p;
  }
  bool isIdent(std::string_view s, std::size_t ahead = 0) const {
    return peek(ahead).kind == Tok::Ident && peek(ahead).text == s;
  }
  bool acceptPunct(const char* p) {
    if (!isPunct(p)) return false;
    next();
    return true;
  }
  bool acceptIdent(std::string_view s) {
    if (!isIdent(s)) return false;
    next();
    return true;
  }
  void expectPunct(const char* p) {
    if (!acceptPunct(p)) fail(peek(), std::string("expected '") + p + "'");
  }
  void expectIdent(std::string_view s) {
    if (!acceptIdent(s)) fail(peek(), "expected '" + std::string(s) + "'");
  }
  [[noreturn]] void fail(const Token& t, const std::string& msg) const { fail(t.pos, msg); }
  [[noreturn]] void fail(TextPos pos, const std::string& msg) const {
    throw ParseError(pos.line, pos.column, msg, Lexer::lineText(src_, pos.line));
  }
  std::string describe(const Token& t) const {
    switch (t.kind) {
      case Tok::Eof: return "end of input";
      case Tok::LocalId: return "'%" + t.text + "'";
      case Tok::GlobalId: return "'@" + t.text + "'";
      case Tok::MetaId: return "'!" + t.text + "'";
      case Tok::MetaName: return "'!" + t.text + "'";
      default: return "'" + t.text + "'";
    }
  }
  std::int64_t parseIntToken() {
    const Token t = next();
    if (t.kind != Tok::Int) fail(t, "expected an integer, got " + describe(t));
    return toInt(t);
  }
  std::int64_t toInt(const Token& t) const {
    try {
      if (t.text.find("0x") != std::string::npos) {
        const bool neg = t.text[0] == '-';
        auto v = static_cast<std::int64_t>(std::stoull(t.text.substr(neg ? 3 : 2), nullptr, 16));
        return neg ? -v : v;
      }
      if (t.text[0] == '-') return std::stoll(t.text);
      return static_cast<std::int64_t>(std::stoull(t.text));
    } catch (const std::exception&) {
      fail(t, "integer literal out of range");
    }
  }
  MetadataId metaIdOf(const Token& t) {
    MetadataId id{toInt(Token{Tok::Int, t.text, t.pos})};
    metaUses_.emplace_back(id, t.pos);
    return id;
  }

  // -- top level -------------------------------------------------------------
  void parseTopLevel() {
    const Token& t = peek();
    if (isIdent("source_filename")) {
      next();
      expectPunct("=");
      const Token s = next();
      if (s.kind != Tok::String) fail(s, "expected a string");
      module_.sourceFilename = s.text;
    } else if (isIdent("target")) {
      next();
      next();
      expectPunct("=");
      if (next().kind != Tok::String) fail(peek(), "expected a string");
    } else if (isIdent("attributes")) {
      next();
      if (next().kind != Tok::AttrGroup) fail(peek(), "expected attribute group");
      expectPunct("=");
      skipBalanced("{", "}");
    } else if (isIdent("define") || isIdent("declare")) {
      parseFunction();
    } else if (t.kind == Tok::LocalId && isPunct("=", 1) && isIdent("type", 2)) {
      parseNamedType();
    } else if (t.kind == Tok::GlobalId && isPunct("=", 1)) {
      parseGlobal();
    } else if (t.kind == Tok::MetaName && isPunct("=", 1)) {
      parseNamedMetadata();
    } else if (t.kind == Tok::MetaId && isPunct("=", 1)) {
      parseMetadataDefinition();
    } else if (t.kind == Tok::Ident && !t.text.empty() && t.text[0] == '$') {
      // comdat declaration: $name = comdat any
      next();
      expectPunct("=");
      expectIdent("comdat");
      next();
    } else {
      fail(t, "unexpected " + describe(t) + " at top level");
    }
  }

  void skipBalanced(const char* open, const char* close) {
    expectPunct(open);
    int depth = 1;
    while (depth > 0) {
      const Token t = next();
      if (t.kind == Tok::Eof) fail(t, std::string("unbalanced '") + open + "'");
      if (t.kind == Tok::Punct && t.text == open) ++depth;
      if (t.kind == Tok::Punct && t.text == close) --depth;
    }
  }

  void parseNamedType() {
    const Token name = next();
    next();  // =
    next();  // type
    if (acceptIdent("opaque")) {
      module_.namedTypes[name.text] = std::nullopt;
    } else {
      module_.namedTypes[name.text] = parseType();
    }
  }

  // -- types -----------------------------------------------------------------
  bool atTypeStart(std::size_t ahead = 0) const {
    const Token& t = peek(ahead);
    if (t.kind == Tok::LocalId) return true;
    if (t.kind == Tok::Punct) return t.text == "{" || t.text == "[" || t.text == "<";
    if (t.kind != Tok::Ident) return false;
    if (t.text == "void" || t.text == "ptr" || t.text == "label" || t.text == "metadata") return true;
    return isIntegerTypeName(t.text);
  }
  static bool isIntegerTypeName(const std::string& s) {
    if (s.size() < 2 || s[0] != 'i') return false;
    for (std::size_t k = 1; k < s.size(); ++k) {
      if (!std::isdigit(static_cast<unsigned char>(s[k]))) return false;
    }
    return true;
  }

  Type parseType() {
    Type base = parseBaseType();
    for (;;) {
      if (acceptPunct("*")) {
        base = Type::pointer(base);
      } else if (isPunct("(")) {
        next();
        std::vector<Type> params;
        bool varargs = false;
        while (!isPunct(")")) {
          if (acceptPunct("...")) {
            varargs = true;
          } else {
            params.push_back(parseType());
            skipParamAttributes();
          }
          if (!acceptPunct(",")) break;
        }
        expectPunct(")");
        base = Type::function(base, std::move(params), varargs);
      } else {
        return base;
      }
    }
  }

  Type parseBaseType() {
    const Token t = next();
    if (t.kind == Tok::LocalId) {
      namedTypeUses_.emplace_back(t.text, t.pos);
      return Type::named(t.text);
    }
    if (t.kind == Tok::Punct && t.text == "[") {
      const auto n = parseIntToken();
      expectIdent("x");
      Type elem = parseType();
      expectPunct("]");
      return Type::array(static_cast<std::uint64_t>(n), elem);
    }
    if (t.kind == Tok::Punct && (t.text == "{" || t.text == "<")) {
      const bool packed = t.text == "<";
      if (packed) {
        if (!isPunct("{")) fail(t, "vector types are not supported");
        next();
      }
      std::vector<Type> fields;
      while (!isPunct("}")) {
        fields.push_back(parseType());
        if (!acceptPunct(",")) break;
      }
      expectPunct("}");
      if (packed) expectPunct(">");
      return Type::structure(std::move(fields), packed);
    }
    if (t.kind == Tok::Ident) {
      if (t.text == "void") return Type::voidType();
      if (t.text == "label") return Type::label();
      if (t.text == "metadata") return Type::metadata();
      if (t.text == "ptr") {
        if (isIdent("addrspace")) {
          next();
          skipBalanced("(", ")");
        }
        return Type::pointer(std::nullopt);
      }
      if (isIntegerTypeName(t.text)) {
        const unsigned bits = static_cast<unsigned>(std::stoul(t.text.substr(1)));
        if (bits != 1 && bits != 8 && bits != 16 && bits != 32 && bits != 64) {
          fail(t, "unsupported integer width i" + std::to_string(bits));
        }
        return Type::integer(bits);
      }
      if (t.text == "float" || t.text == "double" || t.text == "half" || t.text == "x86_fp80") {
        fail(t, "unsupported floating-point type '" + t.text + "'");
      }
    }
    fail(t, "expected a type, got " + describe(t));
  }

  // Attributes between a parameter type and its name/value.
  void skipParamAttributes() {
    for (;;) {
      const Token& t = peek();
      if (t.kind != Tok::Ident || kValueKeywords.count(t.text) || atTypeStart()) return;
      next();
      if (t.text == "align") {
        if (peek().kind == Tok::Int) next();
      } else if (isPunct("(")) {
        skipBalanced("(", ")");
      }
    }
  }

  // -- globals ---------------------------------------------------------------
  void parseGlobal() {
    GlobalVariable g;
    const Token name = next();
    g.name = name.text;
    g.pos = name.pos;
    next();  // =
    bool external = false;
    for (;;) {
      const Token& t = peek();
      if (t.kind != Tok::Ident) fail(t, "expected 'global' or 'constant'");
      if (t.text == "global" || t.text == "constant") break;
      if (t.text == "external" || t.text == "extern_weak") external = true;
      if (t.text == "addrspace") {
        next();
        skipBalanced("(", ")");
        continue;
      }
      next();
    }
    g.isConstant = next().text == "constant";
    g.valueType = parseType();
    if (!external) g.initializer = Operand{g.valueType, parseValue(g.valueType, nullptr)};
    while (acceptPunct(",")) {
      if (acceptIdent("align")) {
        parseIntToken();
      } else if (acceptIdent("section")) {
        next();
      } else if (acceptIdent("comdat")) {
        if (isPunct("(")) skipBalanced("(", ")");
      } else if (peek().kind == Tok::MetaName) {
        const Token attach = next();
        const Token ref = next();
        if (ref.kind != Tok::MetaId) fail(ref, "expected metadata reference");
        if (attach.text == "dbg") g.dbgRefs.push_back(metaIdOf(ref));
      } else {
        fail(peek(), "unexpected " + describe(peek()) + " in global definition");
      }
    }
    module_.globals.push_back(std::move(g));
  }

  // -- metadata --------------------------------------------------------------
  void parseNamedMetadata() {
    const Token name = next();
    next();  // =
    if (next().kind != Tok::Bang) fail(name, "expected '!{' for named metadata");
    expectPunct("{");
    auto& ids = module_.namedMetadata[name.text];
    while (!isPunct("}")) {
      const Token ref = next();
      if (ref.kind != Tok::MetaId) fail(ref, "expected metadata reference in named metadata");
      ids.push_back(metaIdOf(ref));
      if (!acceptPunct(",")) break;
    }
    expectPunct("}");
  }

  void parseMetadataDefinition() {
    const Token idTok = next();
    next();  // =
    MetadataId id{toInt(Token{Tok::Int, idTok.text, idTok.pos})};
    if (module_.metadata.count(id)) fail(idTok, "metadata !" + idTok.text + " defined twice");
    module_.metadata.emplace(id, parseMetadataNode());
  }

  MetadataNode parseMetadataNode() {
    MetadataNode node;
    if (acceptIdent("distinct")) node.distinct = true;
    const Token t = peek();
    if (t.kind == Tok::Bang && isPunct("{", 1)) {
      next();
      next();
      while (!isPunct("}")) {
        node.attributes.emplace_back("", parseMetadataValue(true));
        if (!acceptPunct(",")) break;
      }
      expectPunct("}");
      return node;
    }
    // `!DILocation(...)` or the simplified `Location(...)` spelling.
    if ((t.kind == Tok::MetaName || t.kind == Tok::Ident) && isPunct("(", 1)) {
      next();
      next();
      node.kind = t.text;
      while (!isPunct(")")) {
        std::string name;
        if (peek().kind == Tok::Ident && isPunct(":", 1)) {
          name = next().text;
          next();
        }
        node.attributes.emplace_back(std::move(name), parseMetadataValue(false));
        if (!acceptPunct(",")) break;
      }
      expectPunct(")");
      return node;
    }
    fail(t, "expected a metadata node, got " + describe(t));
  }

  MetadataValue parseMetadataValue(bool inTuple) {
    MetadataValue v;
    const Token t = peek();
    if (t.kind == Tok::MetaId) {
      next();
      v.kind = MetadataValue::Kind::Ref;
      v.ref = metaIdOf(t);
    } else if (t.kind == Tok::Bang && peek(1).kind == Tok::String) {
      next();
      v.kind = MetadataValue::Kind::String;
      v.text = next().text;
    } else if (t.kind == Tok::String) {
      next();
      v.kind = MetadataValue::Kind::String;
      v.text = t.text;
    } else if (t.kind == Tok::Bang && isPunct("{", 1)) {
      MetadataNode tuple = parseMetadataNode();
      v.kind = MetadataValue::Kind::Tuple;
      for (auto& [name, item] : tuple.attributes) v.items.push_back(std::move(item));
    } else if (t.kind == Tok::MetaName || isIdent("distinct") ||
               (!inTuple && t.kind == Tok::Ident && isPunct("(", 1))) {
      v.kind = MetadataValue::Kind::Node;
      v.node = std::make_shared<const MetadataNode>(parseMetadataNode());
    } else if (atTypeStart()) {
      const Type type = parseType();
      const Token val = next();
      v.kind = MetadataValue::Kind::Typed;
      v.text = printType(type);
      if (val.kind == Tok::Int) {
        v.integer = toInt(val);
      } else {
        // Non-integer constants in tuples (e.g. `i32* @g`) are kept as text.
        v.text += " " + (val.kind == Tok::GlobalId ? "@" + val.text : val.text);
      }
    } else if (t.kind == Tok::Int) {
      next();
      v.kind = MetadataValue::Kind::Integer;
      v.integer = toInt(t);
    } else if (t.kind == Tok::Ident) {
      next();
      if (t.text == "null") {
        v.kind = MetadataValue::Kind::Null;
        return v;
      }
      v.kind = MetadataValue::Kind::Symbol;
      v.text = t.text;
      while (isPunct("|")) {
        next();
        const Token more = next();
        if (more.kind != Tok::Ident) fail(more, "expected a flag name after '|'");
        v.text += " | " + more.text;
      }
    } else {
      fail(t, "unexpected " + describe(t) + " in metadata");
    }
    return v;
  }

  // -- functions -------------------------------------------------------------
  void parseFunction() {
    const bool isDefine = next().text == "define";
    while (peek().kind == Tok::Ident && !atTypeStart()) {
      next();
      if (isPunct("(")) skipBalanced("(", ")");
    }
    IrFunction fn;
    fn.returnType = parseType();
    const Token name = next();
    if (name.kind != Tok::GlobalId) fail(name, "expected function name");
    fn.irName = name.text;
    if (!functionNames_.insert(fn.irName).second) fail(name, "function @" + fn.irName + " defined twice");

    regs_ = RegisterTable{};
    unnamedCounter_ = 0;
    expectPunct("(");
    while (!isPunct(")")) {
      if (acceptPunct("...")) {
        fn.varargs = true;
        break;
      }
      Parameter p;
      p.type = parseType();
      skipParamAttributes();
      if (peek().kind == Tok::LocalId) {
        const Token reg = next();
        p.reg.name = reg.text;
        defineRegister(reg);
      } else {
        p.reg.name = std::to_string(unnamedCounter_++);
        regs_.defined.emplace(p.reg.name, name.pos);
      }
      p.reg.slot = regs_.slotFor(p.reg.name);
      fn.params.push_back(std::move(p));
      if (!acceptPunct(",")) break;
    }
    expectPunct(")");

    // Trailing function attributes, attachments, comdat, section, etc.
    for (;;) {
      const Token& t = peek();
      if (t.kind == Tok::Eof) break;
      if (isDefine && isPunct("{")) break;
      if (t.kind == Tok::AttrGroup) {
        next();
      } else if (t.kind == Tok::MetaName && peek(1).kind == Tok::MetaId) {
        const Token attach = next();
        const Token ref = next();
        if (attach.text == "dbg") fn.subprogramRef = metaIdOf(ref);
      } else if (t.kind == Tok::Ident && !kTopLevelKeywords.count(t.text) && t.text[0] != '$') {
        next();
        if (t.text == "align" && peek().kind == Tok::Int) next();
        if ((t.text == "section" || t.text == "gc") && peek().kind == Tok::String) next();
        if (t.text == "personality") fail(t, "exception handling (personality) is not supported");
        if (isPunct("(")) skipBalanced("(", ")");
      } else if (!isDefine) {
        break;
      } else {
        fail(t, "unexpected " + describe(t) + " in function header");
      }
    }

    if (isDefine) {
      expectPunct("{");
      parseBody(fn);
      expectPunct("}");
      validateFunction(fn, name.pos);
    }
    fn.registerCount = static_cast<std::uint32_t>(regs_.slots.size());
    module_.functions.push_back(std::move(fn));
  }

  void defineRegister(const Token& t) {
    if (!regs_.defined.emplace(t.text, t.pos).second) {
      fail(t, "register %" + t.text + " is assigned more than once (SSA violation)");
    }
    noteNumbered(t.text);
  }

  void noteNumbered(const std::string& name) {
    if (!name.empty() && std::all_of(name.begin(), name.end(), [](char c) { return std::isdigit(static_cast<unsigned char>(c)); })) {
      unnamedCounter_ = std::max<std::uint64_t>(unnamedCounter_, std::stoull(name) + 1);
    }
  }

  bool atLabel() const {
    const Token& t = peek();
    return (t.kind == Tok::Ident || t.kind == Tok::Int || t.kind == Tok::String) && isPunct(":", 1);
  }

  void parseBody(IrFunction& fn) {
    while (!isPunct("}")) {
      BasicBlock bb;
      if (atLabel()) {
        const Token label = next();
        next();
        bb.label = label.text;
        noteNumbered(label.text);
      } else {
        bb.label = std::to_string(unnamedCounter_++);
      }
      if (fn.blockIndex(bb.label)) fail(peek(), "block label " + bb.label + " defined twice");
      bool terminated = false;
      while (!terminated) {
        if (peek().kind == Tok::Eof || isPunct("}")) fail(peek(), "block " + bb.label + " has no terminator");
        terminated = parseInstructionInto(bb);
      }
      fn.blocks.push_back(std::move(bb));
    }
    if (fn.blocks.empty()) fail(peek(), "function body has no blocks");
  }

  // Returns true once the block's terminator was parsed.
  bool parseInstructionInto(BasicBlock& bb) {
    std::optional<Token> resultTok;
    if (peek().kind == Tok::LocalId && isPunct("=", 1)) {
      resultTok = next();
      next();
    }
    const Token opTok = next();
    if (opTok.kind != Tok::Ident) fail(opTok, "expected an instruction, got " + describe(opTok));
    std::string op = opTok.text;
    if (op == "tail" || op == "musttail" || op == "notail") {
      const Token callTok = next();
      if (callTok.text != "call") fail(callTok, "expected 'call'");
      op = "call";
    }

    if (op == "br" || op == "switch" || op == "ret" || op == "unreachable") {
      if (resultTok) fail(opTok, "terminator cannot produce a value");
      bb.terminator = parseTerminator(op, opTok);
      return true;
    }

    if (op == "phi") {
      if (!resultTok) fail(opTok, "phi must assign a register");
      if (!bb.body.empty()) fail(opTok, "phi instructions must precede all other instructions in a block");
      PhiInstruction phi;
      phi.pos = opTok.pos;
      phi.type = parseType();
      do {
        expectPunct("[");
        ValueRef v = parseValue(phi.type, &opTok);
        expectPunct(",");
        const Token pred = next();
        if (pred.kind != Tok::LocalId) fail(pred, "expected predecessor label");
        expectPunct("]");
        phi.incoming.push_back({pred.text, std::move(v)});
      } while (acceptPunct(",") && isPunct("["));
      if (i_ > 0 && toks_[i_ - 1].kind == Tok::Punct && toks_[i_ - 1].text == ",") --i_;
      defineRegister(*resultTok);
      phi.result = regs_.use(resultTok->text, resultTok->pos);
      phi.dbg = parseAttachments();
      bb.phis.push_back(std::move(phi));
      return false;
    }

    Instruction inst;
    inst.pos = opTok.pos;
    parseInstructionBody(op, opTok, inst);
    if (inst.resultType.isVoid() || inst.op == Opcode::Store) {
      if (resultTok) fail(*resultTok, "instruction does not produce a value");
    } else {
      if (!resultTok) {
        if (inst.op != Opcode::Call) fail(opTok, "instruction result must be assigned to a register");
      } else {
        defineRegister(*resultTok);
        inst.result = regs_.use(resultTok->text, resultTok->pos);
      }
    }
    inst.dbg = parseAttachments();
    bb.body.push_back(std::move(inst));
    return false;
  }

  // `, align 4`, `, !dbg !12`, `, !tbaa !5` ... Returns the !dbg reference.
  std::optional<MetadataId> parseAttachments() {
    std::optional<MetadataId> dbg;
    while (acceptPunct(",")) {
      if (acceptIdent("align")) {
        parseIntToken();
      } else if (peek().kind == Tok::MetaName) {
        const Token attach = next();
        if (peek().kind == Tok::MetaId) {
          const Token ref = next();
          if (attach.text == "dbg") dbg = metaIdOf(ref);
        } else {
          const MetadataNode inlineNode = parseMetadataNode();
          if (attach.text == "dbg") fail(attach, "inline !dbg locations are not supported");
        }
      } else {
        fail(peek(), "unexpected " + describe(peek()) + " after instruction");
      }
    }
    return dbg;
  }

  Terminator parseTerminator(const std::string& op, const Token& opTok) {
    Terminator term;
    term.pos = opTok.pos;
    if (op == "unreachable") {
      term.kind = Terminator::Kind::Unreachable;
    } else if (op == "ret") {
      term.kind = Terminator::Kind::Return;
      Type t = parseType();
      if (!t.isVoid()) term.value = Operand{t, parseValue(t, &opTok)};
    } else if (op == "switch") {
      term.kind = Terminator::Kind::Switch;
      Type t = parseType();
      if (!t.isInteger()) fail(opTok, "switch selector must be an integer");
      term.value = Operand{t, parseValue(t, &opTok)};
      expectPunct(",");
      expectIdent("label");
      term.targets.push_back(parseLabelRef());
      expectPunct("[");
      while (!acceptPunct("]")) {
        const Token caseTok = peek();
        Type ct = parseType();
        if (ct != t) fail(caseTok, "switch case type differs from the selector type");
        ValueRef v = parseValue(ct, &caseTok);
        if (v.kind != ValueRef::Kind::Integer) fail(caseTok, "switch case must be an integer constant");
        term.cases.push_back(Operand{ct, v});
        expectPunct(",");
        expectIdent("label");
        term.targets.push_back(parseLabelRef());
      }
    } else {
      if (acceptIdent("label")) {
        term.kind = Terminator::Kind::Branch;
        term.targets.push_back(parseLabelRef());
      } else {
        term.kind = Terminator::Kind::CondBranch;
        Type t = parseType();
        if (!(t.isInteger() && t.bits() == 1)) fail(opTok, "branch condition must be i1");
        term.value = Operand{t, parseValue(t, &opTok)};
        expectPunct(",");
        expectIdent("label");
        term.targets.push_back(parseLabelRef());
        expectPunct(",");
        expectIdent("label");
        term.targets.push_back(parseLabelRef());
      }
    }
    term.dbg = parseAttachments();
    return term;
  }

  std::string parseLabelRef() {
    const Token t = next();
    if (t.kind != Tok::LocalId) fail(t, "expected a block label");
    labelUses_.emplace_back(t.text, t.pos);
    return t.text;
  }

  void skipFlags(std::initializer_list<std::string_view> flags) {
    for (bool again = true; again;) {
      again = false;
      for (auto f : flags) {
        if (acceptIdent(f)) again = true;
      }
    }
  }

  void parseInstructionBody(const std::string& op, const Token& opTok, Instruction& inst) {
    static const std::unordered_map<std::string, Opcode> kBinary = {
        {"add", Opcode::Add},   {"sub", Opcode::Sub},   {"mul", Opcode::Mul},   {"sdiv", Opcode::SDiv},
        {"udiv", Opcode::UDiv}, {"srem", Opcode::SRem}, {"urem", Opcode::URem}, {"and", Opcode::And},
        {"or", Opcode::Or},     {"xor", Opcode::Xor},   {"shl", Opcode::Shl},   {"ashr", Opcode::AShr},
        {"lshr", Opcode::LShr}};
    static const std::unordered_map<std::string, Opcode> kCasts = {
        {"zext", Opcode::ZExt},         {"sext", Opcode::SExt},         {"trunc", Opcode::Trunc},
        {"bitcast", Opcode::BitCast},   {"ptrtoint", Opcode::PtrToInt}, {"inttoptr", Opcode::IntToPtr}};
    static const std::unordered_map<std::string, ICmpPredicate> kPreds = {
        {"eq", ICmpPredicate::Eq},   {"ne", ICmpPredicate::Ne},   {"slt", ICmpPredicate::Slt},
        {"sle", ICmpPredicate::Sle}, {"sgt", ICmpPredicate::Sgt}, {"sge", ICmpPredicate::Sge},
        {"ult", ICmpPredicate::Ult}, {"ule", ICmpPredicate::Ule}, {"ugt", ICmpPredicate::Ugt},
        {"uge", ICmpPredicate::Uge}};

    if (auto it = kBinary.find(op); it != kBinary.end()) {
      inst.op = it->second;
      skipFlags({"nsw", "nuw", "exact", "disjoint"});
      inst.resultType = parseType();
      if (!inst.resultType.isInteger()) fail(opTok, "binary operations require integer operands");
      inst.operands.push_back({inst.resultType, parseValue(inst.resultType, &opTok)});
      expectPunct(",");
      inst.operands.push_back({inst.resultType, parseValue(inst.resultType, &opTok)});
      return;
    }
    if (auto it = kCasts.find(op); it != kCasts.end()) {
      inst.op = it->second;
      Type from = parseType();
      inst.operands.push_back({from, parseValue(from, &opTok)});
      expectIdent("to");
      inst.resultType = parseType();
      return;
    }
    if (op == "icmp") {
      inst.op = Opcode::ICmp;
      const Token pred = next();
      auto it = kPreds.find(pred.text);
      if (it == kPreds.end()) fail(pred, "unknown icmp predicate '" + pred.text + "'");
      inst.predicate = it->second;
      Type t = parseType();
      inst.operands.push_back({t, parseValue(t, &opTok)});
      expectPunct(",");
      inst.operands.push_back({t, parseValue(t, &opTok)});
      inst.resultType = Type::integer(1);
      return;
    }
    if (op == "alloca") {
      inst.op = Opcode::Alloca;
      acceptIdent("inalloca");
      inst.elementType = parseType();
      inst.resultType = Type::pointer(inst.elementType);
      if (isPunct(",") && atTypeStart(1)) {
        next();
        Type countType = parseType();
        inst.operands.push_back({countType, parseValue(countType, &opTok)});
      }
      return;
    }
    if (op == "load") {
      inst.op = Opcode::Load;
      acceptIdent("volatile");
      inst.resultType = parseType();
      expectPunct(",");
      Type pt = parseType();
      inst.operands.push_back({pt, parseValue(pt, &opTok)});
      return;
    }
    if (op == "store") {
      inst.op = Opcode::Store;
      acceptIdent("volatile");
      Type vt = parseType();
      inst.operands.push_back({vt, parseValue(vt, &opTok)});
      expectPunct(",");
      Type pt = parseType();
      inst.operands.push_back({pt, parseValue(pt, &opTok)});
      inst.resultType = Type::voidType();
      return;
    }
    if (op == "getelementptr") {
      inst.op = Opcode::GetElementPtr;
      acceptIdent("inbounds");
      inst.elementType = parseType();
      while (acceptPunct(",")) {
        if (peek().kind == Tok::MetaName || isIdent("align")) {
          --i_;
          break;
        }
        acceptIdent("inrange");
        Type t = parseType();
        inst.operands.push_back({t, parseValue(t, &opTok)});
      }
      if (inst.operands.empty()) fail(opTok, "getelementptr needs a base pointer");
      inst.resultType = Type::pointer(std::nullopt);
      return;
    }
    if (op == "select") {
      inst.op = Opcode::Select;
      for (int k = 0; k < 3; ++k) {
        if (k) expectPunct(",");
        Type t = parseType();
        inst.operands.push_back({t, parseValue(t, &opTok)});
      }
      inst.resultType = inst.operands[1].type;
      return;
    }
    if (op == "call") {
      parseCall(opTok, inst);
      return;
    }
    fail(opTok, "unsupported instruction '" + op + "'");
  }

  void parseCall(const Token& opTok, Instruction& inst) {
    inst.op = Opcode::Call;
    // calling convention, fast-math flags and return attributes
    while (peek().kind == Tok::Ident && !atTypeStart()) {
      next();
      if (isPunct("(")) skipBalanced("(", ")");
    }
    Type ret = parseType();
    std::optional<Type> signature;
    if (ret.is(Type::Kind::Function)) {
      signature = ret;
      ret = *ret.element();
    }
    const Token calleeTok = peek();
    Type calleeType = Type::pointer(std::nullopt);
    ValueRef callee = parseValue(calleeType, &opTok);
    if (callee.kind != ValueRef::Kind::Global && callee.kind != ValueRef::Kind::Register &&
        callee.kind != ValueRef::Kind::ConstantExpr) {
      fail(calleeTok, "unsupported callee");
    }
    if (calleeTok.kind == Tok::GlobalId && calleeTok.text.rfind("llvm.", 0) == 0 &&
        !isDbgIntrinsicName(calleeTok.text) && !isSupportedLlvmIntrinsic(calleeTok.text)) {
      fail(calleeTok, "unsupported intrinsic '@" + calleeTok.text + "'");
    }
    inst.operands.push_back({calleeType, std::move(callee)});
    expectPunct("(");
    std::vector<Type> argTypes;
    while (!isPunct(")")) {
      Type t = parseType();
      skipParamAttributes();
      ValueRef v = t.is(Type::Kind::Metadata) ? parseMetadataOperand() : parseValue(t, &opTok);
      argTypes.push_back(t);
      inst.operands.push_back({t, std::move(v)});
      if (!acceptPunct(",")) break;
    }
    expectPunct(")");
    while (peek().kind == Tok::AttrGroup) next();
    inst.resultType = ret;
    inst.elementType = signature ? *signature : Type::function(ret, std::move(argTypes), false);
  }

  static bool isSupportedLlvmIntrinsic(std::string_view name) {
    return name.rfind("llvm.memcpy.", 0) == 0 || name.rfind("llvm.memset.", 0) == 0 ||
           name.rfind("llvm.memmove.", 0) == 0 || name.rfind("llvm.lifetime.", 0) == 0;
  }

  ValueRef parseMetadataOperand() {
    const Token t = peek();
    if (t.kind == Tok::MetaId) {
      next();
      return ValueRef::makeMetadata(metaIdOf(t));
    }
    if (t.kind == Tok::MetaName || (t.kind == Tok::Bang && isPunct("{", 1))) {
      ValueRef v;
      v.kind = ValueRef::Kind::InlineMetadata;
      v.inlineNode = std::make_shared<const MetadataNode>(parseMetadataNode());
      return v;
    }
    Type inner = parseType();
    ValueRef v;
    v.kind = ValueRef::Kind::MetadataValue;
    v.wrapped = std::make_shared<const Operand>(Operand{inner, parseValue(inner, &t)});
    return v;
  }

  // -- values ----------------------------------------------------------------
  // `site` is the instruction token used for diagnostics; null for globals.
  ValueRef parseValue(const Type& type, const Token* site) {
    const Token t = next();
    switch (t.kind) {
      case Tok::Int: {
        const Type resolved = module_.resolve(type);
        if (!resolved.isInteger()) fail(t, "integer constant for non-integer type " + printType(type));
        const auto raw = static_cast<std::uint64_t>(toInt(t));
        const unsigned bits = resolved.bits();
        if (bits < 64) {
          const auto sv = toInt(t);
          const std::int64_t lo = -(std::int64_t{1} << (bits - 1));
          const std::int64_t hi = (std::int64_t{1} << bits) - 1;
          if (bits > 1 && (sv < lo || sv > hi)) fail(t, "constant does not fit in i" + std::to_string(bits));
        }
        return ValueRef::makeInteger(raw, bits);
      }
      case Tok::LocalId:
        if (!site) fail(t, "register reference outside a function");
        return ValueRef::makeRegister(regs_.use(t.text, t.pos));
      case Tok::GlobalId:
        globalUses_.emplace_back(t.text, t.pos);
        return ValueRef::makeGlobal(t.text);
      case Tok::CString: {
        ValueRef v;
        v.kind = ValueRef::Kind::Bytes;
        v.name = t.text;
        return v;
      }
      case Tok::Punct:
        if (t.text == "{" || t.text == "[" || t.text == "<") return parseAggregate(t, type, site);
        break;
      case Tok::Ident: {
        if (t.text == "true" || t.text == "false") return ValueRef::makeInteger(t.text == "true" ? 1 : 0, 1);
        if (t.text == "null") return ValueRef::makeNull();
        if (t.text == "undef" || t.text == "poison") return ValueRef::makeUndef();
        if (t.text == "zeroinitializer") {
          ValueRef v;
          v.kind = ValueRef::Kind::Zero;
          return v;
        }
        if (t.text == "getelementptr" || t.text == "bitcast" || t.text == "ptrtoint" || t.text == "inttoptr") {
          return parseConstantExpr(t, site);
        }
        break;
      }
      default:
        break;
    }
    fail(t, "expected a value, got " + describe(t));
  }

  ValueRef parseAggregate(const Token& open, const Type& type, const Token* site) {
    ValueRef v;
    v.kind = ValueRef::Kind::Aggregate;
    std::string close = open.text == "[" ? "]" : "}";
    if (open.text == "<") {
      expectPunct("{");
    }
    while (!isPunct(close.c_str())) {
      Type t = parseType();
      v.elements.push_back({t, parseValue(t, site)});
      if (!acceptPunct(",")) break;
    }
    expectPunct(close.c_str());
    if (open.text == "<") expectPunct(">");
    (void)type;
    return v;
  }

  ValueRef parseConstantExpr(const Token& kw, const Token* site) {
    auto inst = std::make_shared<Instruction>();
    inst->pos = kw.pos;
    if (kw.text == "getelementptr") {
      inst->op = Opcode::GetElementPtr;
      acceptIdent("inbounds");
      expectPunct("(");
      inst->elementType = parseType();
      while (acceptPunct(",")) {
        acceptIdent("inrange");
        Type t = parseType();
        inst->operands.push_back({t, parseValue(t, site)});
      }
      expectPunct(")");
      inst->resultType = Type::pointer(std::nullopt);
    } else {
      inst->op = kw.text == "bitcast" ? Opcode::BitCast : kw.text == "ptrtoint" ? Opcode::PtrToInt : Opcode::IntToPtr;
      expectPunct("(");
      Type from = parseType();
      inst->operands.push_back({from, parseValue(from, site)});
      expectIdent("to");
      inst->resultType = parseType();
      expectPunct(")");
    }
    ValueRef v;
    v.kind = ValueRef::Kind::ConstantExpr;
    v.expr = std::move(inst);
    return v;
  }

  // -- validation ------------------------------------------------------------
  void validateFunction(IrFunction& fn, TextPos headerPos) {
    for (const auto& [name, pos] : regs_.firstUse) {
      if (!regs_.defined.count(name)) fail(pos, "use of undefined register %" + name);
    }
    for (const auto& [label, pos] : labelUses_) {
      if (!fn.blockIndex(label)) fail(pos, "unknown block label %" + label);
    }
    labelUses_.clear();
    std::map<std::string, std::set<std::string>> preds;
    for (auto& bb : fn.blocks) {
      for (const auto& target : bb.terminator.targets) {
        bb.terminator.targetIndex.push_back(*fn.blockIndex(target));
        preds[target].insert(bb.label);
      }
    }
    for (const auto& bb : fn.blocks) {
      for (const auto& phi : bb.phis) {
        for (const auto& pred : preds[bb.label]) {
          if (!phi.incomingFrom(pred)) {
            fail(phi.pos, "phi %" + phi.result.name + " has no incoming value for predecessor %" + pred);
          }
        }
        for (const auto& in : phi.incoming) {
          if (!preds[bb.label].count(in.predecessor)) {
            fail(phi.pos, "phi %" + phi.result.name + " names %" + in.predecessor + " which is not a predecessor");
          }
        }
      }
    }
    if (!fn.blocks.front().phis.empty()) fail(headerPos, "entry block cannot contain phi instructions");
  }

  void finish() {
    std::unordered_set<std::string> globals;
    for (const auto& g : module_.globals) {
      if (!globals.insert(g.name).second) fail(g.pos, "global @" + g.name + " defined twice");
    }
    for (const auto& [name, pos] : globalUses_) {
      if (!globals.count(name) && !functionNames_.count(name)) fail(pos, "use of undefined global @" + name);
    }
    for (const auto& [name, pos] : namedTypeUses_) {
      if (!module_.namedTypes.count(name)) fail(pos, "use of undefined type %" + name);
    }
    for (const auto& [id, pos] : metaUses_) {
      if (!module_.metadata.count(id)) fail(pos, "reference to undefined metadata !" + std::to_string(id.value));
    }
    for (auto& g : module_.globals) {
      if (g.initializer) markFunctions(g.initializer->value);
    }
    for (auto& fn : module_.functions) {
      for (auto& bb : fn.blocks) {
        for (auto& phi : bb.phis) {
          for (auto& in : phi.incoming) markFunctions(in.value);
        }
        for (auto& inst : bb.body) markFunctions(inst);
        if (bb.terminator.value) markFunctions(bb.terminator.value->value);
      }
    }
  }

  void markFunctions(Instruction& inst) {
    for (auto& op : inst.operands) markFunctions(op.value);
  }

  void markFunctions(ValueRef& v) {
    switch (v.kind) {
      case ValueRef::Kind::Global:
        if (functionNames_.count(v.name)) v.kind = ValueRef::Kind::Function;
        break;
      case ValueRef::Kind::ConstantExpr: {
        auto copy = std::make_shared<Instruction>(*v.expr);
        markFunctions(*copy);
        v.expr = std::move(copy);
        break;
      }
      case ValueRef::Kind::MetadataValue: {
        auto copy = std::make_shared<Operand>(*v.wrapped);
        markFunctions(copy->value);
        v.wrapped = std::move(copy);
        break;
      }
      case ValueRef::Kind::Aggregate:
        for (auto& e : v.elements) markFunctions(e.value);
        break;
      default:
        break;
    }
  }

  std::string_view src_;
  std::vector<Token> toks_;
  std::size_t i_ = 0;
  IrModule module_;
  RegisterTable regs_;
  std::uint64_t unnamedCounter_ = 0;
  std::set<std::string> functionNames_;
  std::vector<std::pair<std::string, TextPos>> globalUses_;
  std::vector<std::pair<std::string, TextPos>> namedTypeUses_;
  std::vector<std::pair<std::string, TextPos>> labelUses_;
  std::vector<std::pair<MetadataId, TextPos>> metaUses_;
};

}  // namespace

IrModule parseModule(std::string_view source, std::string originName) {
  return Parser(source, std::move(originName)).run();
}

IrModule parseModuleFile(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open " + path);
  std::ostringstream buf;
  buf << in.rdbuf();
  return parseModule(buf.str(), path);
}

bool isDbgIntrinsicName(std::string_view callee) {
  return callee == "llvm.dbg.declare" || callee == "llvm.dbg.value";
}

std::optional<DbgIntrinsic> parseIntrinsicCall(const IrModule& module, const Instruction& instr) {
  if (instr.op != Opcode::Call || instr.operands.empty()) return std::nullopt;
  const auto& callee = instr.operands[0].value;
  if (callee.kind != ValueRef::Kind::Function || !isDbgIntrinsicName(callee.name)) return std::nullopt;

  DbgIntrinsic out;
  out.kind = callee.name == "llvm.dbg.declare" ? DbgIntrinsic::Kind::Declare : DbgIntrinsic::Kind::Value;
  if (instr.operands.size() < 3) throw MalformedIntrinsicError("@" + callee.name + " needs at least two operands");
  const auto& value = instr.operands[1].value;
  const auto& variable = instr.operands[2].value;
  if (value.kind != ValueRef::Kind::MetadataValue || variable.kind != ValueRef::Kind::Metadata) {
    throw MalformedIntrinsicError("@" + callee.name + " operands must be metadata-wrapped");
  }
  out.valueOperand = *value.wrapped;
  out.variableRef = variable.metadata;
  const MetadataNode* var = module.findMetadata(variable.metadata);
  if (!var || var->kind.find("LocalVariable") == std::string::npos) {
    throw MalformedIntrinsicError("@" + callee.name + " must name a local variable");
  }
  if (instr.operands.size() >= 4) {
    const auto& expr = instr.operands[3].value;
    if (expr.kind == ValueRef::Kind::InlineMetadata) {
      out.expressionNode = expr.inlineNode;
    } else if (expr.kind == ValueRef::Kind::Metadata) {
      out.expressionRef = expr.metadata;
      if (const auto* node = module.findMetadata(expr.metadata)) {
        out.expressionNode = std::make_shared<const MetadataNode>(*node);
      }
    } else {
      throw MalformedIntrinsicError("@" + callee.name + " expression operand must be metadata");
    }
    out.expressionEmpty = !out.expressionNode || out.expressionNode->attributes.empty();
  }
  return out;
}

}  // namespace irdb
