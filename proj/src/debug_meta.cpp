#include "irdb/debug_meta.hpp"

#include <algorithm>
#include <fstream>
#include <sstream>

namespace irdb {

MalformedMetadataError::MalformedMetadataError(MetadataId bad, const std::string& message)
    : std::runtime_error("malformed metadata !" + std::to_string(bad.value) + ": " + message), id(bad) {}

std::string normalizedKind(const MetadataNode& node) {
  if (node.kind.size() > 2 && node.kind.compare(0, 2, "DI") == 0) return node.kind.substr(2);
  return node.kind;
}

namespace {

// Alternate spellings accepted for attribute names.
std::string_view aliasOf(std::string_view name) {
  if (name == "column") return "col";
  if (name == "filename") return "name";
  if (name == "directory") return "path";
  return {};
}

}  // namespace

const MetadataValue* attribute(const MetadataNode& node, std::string_view name) {
  if (const auto* v = node.find(name)) return v;
  if (auto alias = aliasOf(name); !alias.empty()) return node.find(alias);
  return nullptr;
}

std::optional<std::int64_t> intAttribute(const MetadataNode& node, std::string_view name) {
  const auto* v = attribute(node, name);
  if (!v || v->kind != MetadataValue::Kind::Integer) return std::nullopt;
  return v->integer;
}

std::optional<std::string> textAttribute(const MetadataNode& node, std::string_view name) {
  const auto* v = attribute(node, name);
  if (!v || (v->kind != MetadataValue::Kind::String && v->kind != MetadataValue::Kind::Symbol)) return std::nullopt;
  return v->text;
}

std::optional<MetadataId> refAttribute(const MetadataNode& node, std::string_view name) {
  const auto* v = attribute(node, name);
  if (!v || v->kind != MetadataValue::Kind::Ref) return std::nullopt;
  return v->ref;
}

bool hasFlag(const MetadataNode& node, std::string_view attributeName, std::string_view flag) {
  const auto* v = attribute(node, attributeName);
  if (!v || v->kind != MetadataValue::Kind::Symbol) return false;
  std::string_view text = v->text;
  while (!text.empty()) {
    const auto bar = text.find('|');
    std::string_view part = text.substr(0, bar);
    while (!part.empty() && part.front() == ' ') part.remove_prefix(1);
    while (!part.empty() && part.back() == ' ') part.remove_suffix(1);
    if (part == flag) return true;
    if (bar == std::string_view::npos) break;
    text.remove_prefix(bar + 1);
  }
  return false;
}

// --- sources ----------------------------------------------------------------

SourceFile::SourceFile(std::string path, std::string content) : path_(std::move(path)), content_(std::move(content)) {
  lineStarts_.push_back(0);
  for (std::size_t i = 0; i < content_.size(); ++i) {
    if (content_[i] == '\n' && i + 1 < content_.size()) lineStarts_.push_back(i + 1);
  }
}

std::string_view SourceFile::lineText(std::uint32_t line) const {
  if (line == 0 || line > lineStarts_.size()) return {};
  const std::size_t start = lineStarts_[line - 1];
  std::size_t end = content_.find('\n', start);
  if (end == std::string::npos) end = content_.size();
  return std::string_view(content_).substr(start, end - start);
}

std::optional<std::size_t> SourceFile::offsetOf(std::uint32_t line, std::uint32_t column) const {
  if (line == 0 || column == 0 || line > lineStarts_.size()) return std::nullopt;
  const auto text = lineText(line);
  if (column > text.size() + 1) return std::nullopt;
  return lineStarts_[line - 1] + column - 1;
}

SourceRegistry::SourceRegistry(std::vector<std::filesystem::path> searchRoots) : roots_(std::move(searchRoots)) {}

void SourceRegistry::addSearchRoot(std::filesystem::path root) {
  std::lock_guard lock(mutex_);
  roots_.push_back(std::move(root));
}

std::shared_ptr<const SourceFile> SourceRegistry::load(const std::filesystem::path& candidate) {
  const std::string key = candidate.lexically_normal().string();
  if (auto it = cache_.find(key); it != cache_.end()) return it->second;
  std::shared_ptr<const SourceFile> file;
  std::error_code ec;
  if (std::filesystem::is_regular_file(candidate, ec)) {
    std::ifstream in(candidate, std::ios::binary);
    if (in) {
      std::ostringstream buf;
      buf << in.rdbuf();
      file = std::make_shared<const SourceFile>(key, buf.str());
    }
  }
  cache_.emplace(key, file);
  return file;
}

std::shared_ptr<const SourceFile> SourceRegistry::resolve(const std::string& directory, const std::string& filename) {
  std::lock_guard lock(mutex_);
  const auto memoKey = std::make_pair(directory, filename);
  if (auto it = resolved_.find(memoKey); it != resolved_.end()) return it->second;

  std::shared_ptr<const SourceFile> found;
  const std::filesystem::path name(filename);
  if (name.is_absolute()) {
    found = load(name);
  } else if (!directory.empty() && std::filesystem::path(directory).is_absolute()) {
    found = load(std::filesystem::path(directory) / name);
  }
  for (std::size_t i = 0; !found && i < roots_.size(); ++i) {
    found = load(roots_[i] / name.relative_path());
    if (!found && name.has_parent_path()) found = load(roots_[i] / name.filename());
  }
  resolved_.emplace(memoKey, found);
  return found;
}

std::shared_ptr<const SourceFile> SourceRegistry::resolveFileName(const std::string& filename) {
  return resolve("", filename);
}

bool lexicallyPrecedesOrEquals(const LocationDescriptor& a, const LocationDescriptor& b) {
  return std::pair(a.line, a.column) <= std::pair(b.line, b.column);
}

const TypeDescriptor& TypeDescriptor::unqualified() const {
  const TypeDescriptor* t = this;
  while (const auto* q = t->as<QualifiedType>()) {
    if (!q->base) break;
    t = q->base;
  }
  return *t;
}

// --- builder ----------------------------------------------------------------

DescriptorBuilder::DescriptorBuilder(SourceRegistry& registry) : registry_(registry) {}

ScopeDescriptor& DescriptorBuilder::newScope() {
  scopes_.push_back(std::make_unique<ScopeDescriptor>());
  return *scopes_.back();
}

TypeDescriptor& DescriptorBuilder::newType() {
  types_.push_back(std::make_unique<TypeDescriptor>());
  return *types_.back();
}

const TypeDescriptor& DescriptorBuilder::foreignType() {
  if (!foreign_) {
    auto& t = newType();
    t.name = "<foreign>";
    t.bitSize = 64;
    t.detail = ForeignType{};
    foreign_ = &t;
  }
  return *foreign_;
}

std::pair<std::string, std::string> DescriptorBuilder::fileOf(const IrModule& module, MetadataId scopeRef, int depth) {
  const auto* node = module.findMetadata(scopeRef);
  if (!node || depth > 64) return {};
  const std::string kind = normalizedKind(*node);
  if (kind == "File") {
    return {textAttribute(*node, "directory").value_or(""), textAttribute(*node, "filename").value_or("")};
  }
  if (auto file = refAttribute(*node, "file")) return fileOf(module, *file, depth + 1);
  if (auto scope = refAttribute(*node, "scope")) return fileOf(module, *scope, depth + 1);
  return {};
}

LocationDescriptor DescriptorBuilder::makeLocation(const ScopeDescriptor* scope, std::uint32_t line,
                                                   std::uint32_t column, const std::string& directory,
                                                   const std::string& filename) {
  LocationDescriptor loc;
  loc.scope = scope;
  loc.line = std::max<std::uint32_t>(line, 1);
  loc.column = std::max<std::uint32_t>(column, 1);
  if (filename.empty()) {
    loc.file = {};
  } else if (std::filesystem::path(filename).is_absolute() || directory.empty()) {
    loc.file = filename;
  } else {
    loc.file = (std::filesystem::path(directory) / filename).lexically_normal().generic_string();
  }
  if (!filename.empty()) {
    if (auto src = registry_.resolve(directory, filename)) {
      if (auto offset = src->offsetOf(loc.line, loc.column)) {
        const auto text = src->lineText(loc.line);
        loc.resolvedSource = SourceSection{src, *offset, text.size() + 1 - loc.column};
      }
    }
  }
  return loc;
}

const LocationDescriptor& DescriptorBuilder::buildLocation(const IrModule& module, MetadataId locRef) {
  const Key key{&module, locRef.value};
  if (auto it = locationMemo_.find(key); it != locationMemo_.end()) return it->second;
  const auto& node = module.lookupMetadata(locRef);
  if (normalizedKind(node) != "Location") throw MalformedMetadataError(locRef, "expected a DILocation");
  const auto line = intAttribute(node, "line");
  if (!line) throw MalformedMetadataError(locRef, "location without a line");
  // LLVM omits `column: 0`; treat a missing column as the start of the line.
  const auto column = intAttribute(node, "column").value_or(1);
  const ScopeDescriptor* scope = nullptr;
  std::pair<std::string, std::string> file;
  if (auto scopeRef = refAttribute(node, "scope")) {
    scope = &buildScope(module, *scopeRef);
    file = fileOf(module, *scopeRef);
  }
  auto loc = makeLocation(scope, static_cast<std::uint32_t>(std::max<std::int64_t>(*line, 0)),
                          static_cast<std::uint32_t>(std::max<std::int64_t>(column, 0)), file.first, file.second);
  return locationMemo_.emplace(key, std::move(loc)).first->second;
}

const ScopeDescriptor& DescriptorBuilder::compilationUnitFor(const IrModule& module, MetadataId fileOrUnit) {
  const auto [directory, filename] = fileOf(module, fileOrUnit);
  const std::string path =
      directory.empty() || std::filesystem::path(filename).is_absolute()
          ? filename
          : (std::filesystem::path(directory) / filename).string();
  const auto key = std::make_pair(&module, path);
  if (auto it = unitMemo_.find(key); it != unitMemo_.end()) return *it->second;
  auto& cu = newScope();
  cu.kind = ScopeDescriptor::Kind::CompilationUnit;
  cu.name = path;
  unitMemo_.emplace(key, &cu);
  return cu;
}

const ScopeDescriptor& DescriptorBuilder::buildScope(const IrModule& module, MetadataId scopeRef) {
  const Key key{&module, scopeRef.value};
  if (auto it = scopeMemo_.find(key); it != scopeMemo_.end()) return *it->second;
  const auto& node = module.lookupMetadata(scopeRef);
  const std::string kind = normalizedKind(node);

  if (kind == "File" || kind == "CompileUnit") {
    const auto& cu = compilationUnitFor(module, scopeRef);
    scopeMemo_.emplace(key, &cu);
    return cu;
  }
  if (kind == "LexicalBlockFile") {
    auto parent = refAttribute(node, "scope");
    if (!parent) throw MalformedMetadataError(scopeRef, "lexical block file without scope");
    const auto& s = buildScope(module, *parent);
    scopeMemo_.emplace(key, &s);
    return s;
  }
  if (kind == "Namespace") {
    std::string qualified = textAttribute(node, "name").value_or("(anonymous namespace)");
    const ScopeDescriptor* parent = nullptr;
    if (auto p = refAttribute(node, "scope")) {
      const auto& ps = buildScope(module, *p);
      if (ps.kind == ScopeDescriptor::Kind::Named) {
        parent = &ps;
        qualified = ps.name + "::" + qualified;
      }
    }
    if (auto it = namespaces_.find(qualified); it != namespaces_.end()) {
      scopeMemo_.emplace(key, it->second);
      return *it->second;
    }
    auto& ns = newScope();
    ns.kind = ScopeDescriptor::Kind::Named;
    ns.name = qualified;
    ns.parent = parent;
    namespaces_.emplace(qualified, &ns);
    scopeMemo_.emplace(key, &ns);
    return ns;
  }
  if (kind == "Subprogram") {
    auto& fn = newScope();
    scopeMemo_.emplace(key, &fn);
    fn.kind = ScopeDescriptor::Kind::Function;
    fn.name = textAttribute(node, "name").value_or("");
    if (fn.name.empty()) fn.name = textAttribute(node, "linkageName").value_or("<unknown>");
    fn.line = static_cast<std::uint32_t>(std::max<std::int64_t>(intAttribute(node, "line").value_or(1), 1));
    fn.column = 1;
    if (auto unit = refAttribute(node, "unit")) {
      fn.compilationUnit = &compilationUnitFor(module, *unit);
    } else if (auto file = refAttribute(node, "file")) {
      fn.compilationUnit = &compilationUnitFor(module, *file);
    }
    if (auto parent = refAttribute(node, "scope")) {
      const auto& ps = buildScope(module, *parent);
      fn.parent = &ps;
      if (!fn.compilationUnit && ps.kind == ScopeDescriptor::Kind::CompilationUnit) fn.compilationUnit = &ps;
    }
    if (!fn.parent) fn.parent = fn.compilationUnit;
    return fn;
  }
  if (kind == "LexicalBlock") {
    auto& block = newScope();
    scopeMemo_.emplace(key, &block);
    block.kind = ScopeDescriptor::Kind::Block;
    block.line = static_cast<std::uint32_t>(std::max<std::int64_t>(intAttribute(node, "line").value_or(1), 1));
    block.column = static_cast<std::uint32_t>(std::max<std::int64_t>(intAttribute(node, "column").value_or(1), 1));
    auto parent = refAttribute(node, "scope");
    if (!parent) throw MalformedMetadataError(scopeRef, "lexical block without scope");
    block.parent = &buildScope(module, *parent);
    return block;
  }
  if (kind == "CompositeType") {
    auto& ts = newScope();
    scopeMemo_.emplace(key, &ts);
    ts.kind = ScopeDescriptor::Kind::Type;
    ts.name = textAttribute(node, "name").value_or("<anonymous struct>");
    ts.type = &buildType(module, scopeRef);
    if (auto parent = refAttribute(node, "scope")) {
      ts.parent = &buildScope(module, *parent);
    } else if (auto file = refAttribute(node, "file")) {
      ts.parent = &compilationUnitFor(module, *file);
    }
    return ts;
  }
  throw MalformedMetadataError(scopeRef, "'" + node.kind + "' is not a scope");
}

void DescriptorBuilder::addMember(const ScopeDescriptor& scope, const SymbolDescriptor& symbol) {
  auto& members = const_cast<ScopeDescriptor&>(scope).members;
  if (!scope.canHaveMembers()) return;
  if (std::find(members.begin(), members.end(), &symbol) == members.end()) members.push_back(&symbol);
}

const SymbolDescriptor& DescriptorBuilder::buildSymbol(const IrModule& module, MetadataId varRef) {
  const Key key{&module, varRef.value};
  if (auto it = symbolMemo_.find(key); it != symbolMemo_.end()) return *it->second;
  const MetadataNode* node = &module.lookupMetadata(varRef);
  MetadataId varId = varRef;
  std::string kind = normalizedKind(*node);
  if (kind == "GlobalVariableExpression") {
    auto var = refAttribute(*node, "var");
    if (!var) throw MalformedMetadataError(varRef, "global variable expression without var");
    varId = *var;
    node = &module.lookupMetadata(varId);
    kind = normalizedKind(*node);
    // Share the descriptor with direct references to the DIGlobalVariable.
    if (auto it = symbolMemo_.find({&module, varId.value}); it != symbolMemo_.end()) {
      symbolMemo_.emplace(key, it->second);
      return *it->second;
    }
  }
  if (kind != "LocalVariable" && kind != "GlobalVariable") {
    throw MalformedMetadataError(varRef, "'" + node->kind + "' is not a variable");
  }
  auto name = textAttribute(*node, "name");
  if (!name) throw MalformedMetadataError(varId, "variable without a name");
  auto typeRef = refAttribute(*node, "type");
  if (!typeRef) throw MalformedMetadataError(varId, "variable '" + *name + "' without a type");

  symbols_.push_back(std::make_unique<SymbolDescriptor>());
  auto& sym = *symbols_.back();
  symbolMemo_.emplace(key, &sym);
  if (varId != varRef) symbolMemo_.emplace(Key{&module, varId.value}, &sym);
  sym.name = *name;
  sym.metadata = varId;
  sym.staticness = kind == "GlobalVariable" ? Staticness::Static : Staticness::Dynamic;
  sym.argumentNumber = static_cast<int>(intAttribute(*node, "arg").value_or(0));
  sym.type = &buildType(module, *typeRef);

  std::pair<std::string, std::string> file;
  if (auto f = refAttribute(*node, "file")) file = fileOf(module, *f);
  if (auto scopeRef = refAttribute(*node, "scope")) {
    sym.enclosingScope = &buildScope(module, *scopeRef);
    if (file.second.empty()) file = fileOf(module, *scopeRef);
  }
  const auto line = static_cast<std::uint32_t>(std::max<std::int64_t>(intAttribute(*node, "line").value_or(1), 1));
  sym.declaredAt = makeLocation(sym.enclosingScope, line, 1, file.first, file.second);
  if (sym.enclosingScope) addMember(*sym.enclosingScope, sym);
  return sym;
}

namespace {

Encoding encodingOf(const MetadataNode& node, MetadataId id) {
  const auto enc = textAttribute(node, "encoding");
  if (!enc) throw MalformedMetadataError(id, "basic type without encoding");
  const std::string& e = *enc;
  if (e == "DW_ATE_signed" || e == "signed_integer" || e == "signed") return Encoding::SignedInt;
  if (e == "DW_ATE_unsigned" || e == "unsigned_integer" || e == "unsigned") return Encoding::UnsignedInt;
  if (e == "DW_ATE_boolean" || e == "boolean") return Encoding::Bool;
  if (e == "DW_ATE_signed_char" || e == "signed_char") return Encoding::SignedChar;
  if (e == "DW_ATE_unsigned_char" || e == "unsigned_char") return Encoding::UnsignedChar;
  if (e == "DW_ATE_float" || e == "float") return Encoding::Float;
  throw MalformedMetadataError(id, "unsupported encoding " + e);
}

std::string pointerName(const TypeDescriptor* pointee, bool reference) {
  const char* sigil = reference ? "&" : "*";
  if (!pointee) return std::string("void ") + sigil;
  if (pointee->as<FunctionTypeDesc>()) {
    // "int (int, int)" -> "int (*)(int, int)"
    const auto paren = pointee->name.find('(');
    if (paren != std::string::npos) {
      return pointee->name.substr(0, paren) + "(" + sigil + ")" + pointee->name.substr(paren);
    }
  }
  return pointee->name + " " + sigil;
}

}  // namespace

const TypeDescriptor& DescriptorBuilder::buildType(const IrModule& module, std::optional<MetadataId> typeRef) {
  if (!typeRef) return foreignType();
  const Key key{&module, typeRef->value};
  if (auto it = typeMemo_.find(key); it != typeMemo_.end()) return *it->second;
  const MetadataId id = *typeRef;
  const auto& node = module.lookupMetadata(id);
  const std::string kind = normalizedKind(node);
  const std::string tag = textAttribute(node, "tag").value_or("");
  auto& desc = newType();
  typeMemo_.emplace(key, &desc);
  desc.bitSize = static_cast<std::uint64_t>(intAttribute(node, "size").value_or(0));

  if (kind == "BasicType") {
    desc.name = textAttribute(node, "name").value_or("<unnamed>");
    desc.detail = PrimitiveType{encodingOf(node, id)};
    if (!intAttribute(node, "size")) throw MalformedMetadataError(id, "basic type without size");
    return desc;
  }
  if (kind == "DerivedType") {
    const auto baseRef = refAttribute(node, "baseType");
    const TypeDescriptor* base = baseRef ? &buildType(module, *baseRef) : nullptr;
    if (tag == "DW_TAG_pointer_type" || tag == "DW_TAG_reference_type" || tag == "DW_TAG_rvalue_reference_type" ||
        tag == "DW_TAG_ptr_to_member_type") {
      const bool reference = tag != "DW_TAG_pointer_type" && tag != "DW_TAG_ptr_to_member_type";
      desc.detail = PointerType{base, reference};
      desc.name = pointerName(base, reference);
      if (desc.bitSize == 0) desc.bitSize = 64;
      return desc;
    }
    QualifiedType q;
    q.base = base;
    if (tag == "DW_TAG_const_type") {
      q.qualifier = QualifiedType::Qualifier::Const;
      desc.name = "const " + (base ? base->name : std::string("void"));
    } else if (tag == "DW_TAG_volatile_type") {
      q.qualifier = QualifiedType::Qualifier::Volatile;
      desc.name = "volatile " + (base ? base->name : std::string("void"));
    } else if (tag == "DW_TAG_restrict_type") {
      q.qualifier = QualifiedType::Qualifier::Restrict;
      desc.name = (base ? base->name : std::string("void")) + " restrict";
    } else if (tag == "DW_TAG_typedef" || tag == "DW_TAG_atomic_type") {
      q.qualifier = QualifiedType::Qualifier::Typedef;
      desc.name = textAttribute(node, "name").value_or(base ? base->name : "void");
    } else {
      throw MalformedMetadataError(id, "derived type '" + tag + "' cannot be used as a variable type");
    }
    desc.detail = q;
    if (desc.bitSize == 0 && base) desc.bitSize = base->bitSize;
    return desc;
  }
  if (kind == "CompositeType") {
    if (tag == "DW_TAG_array_type") {
      const auto baseRef = refAttribute(node, "baseType");
      if (!baseRef) throw MalformedMetadataError(id, "array type without element type");
      const TypeDescriptor* element = &buildType(module, *baseRef);
      std::vector<std::uint64_t> counts;
      if (auto elems = refAttribute(node, "elements")) {
        const auto& tuple = module.lookupMetadata(*elems);
        for (const auto& [unused, item] : tuple.attributes) {
          if (item.kind != MetadataValue::Kind::Ref) continue;
          const auto& sub = module.lookupMetadata(item.ref);
          counts.push_back(static_cast<std::uint64_t>(std::max<std::int64_t>(intAttribute(sub, "count").value_or(0), 0)));
        }
      }
      if (counts.empty()) counts.push_back(0);
      // int a[2][3] is an array of 2 arrays of 3 ints; build inside out.
      for (std::size_t k = counts.size(); k-- > 1;) {
        auto& inner = newType();
        inner.detail = ArrayType{element, counts[k]};
        inner.bitSize = element->bitSize * counts[k];
        inner.name = element->name + " [" + std::to_string(counts[k]) + "]";
        element = &inner;
      }
      desc.detail = ArrayType{element, counts[0]};
      if (desc.bitSize == 0) desc.bitSize = element->bitSize * counts[0];
      std::string suffix;
      for (auto c : counts) suffix += "[" + std::to_string(c) + "]";
      const TypeDescriptor* leaf = element;
      while (const auto* a = leaf->as<ArrayType>()) leaf = a->element;
      desc.name = leaf->name + " " + suffix;
      return desc;
    }
    if (tag == "DW_TAG_enumeration_type") {
      desc.name = textAttribute(node, "name").value_or("<anonymous enum>");
      EnumerationType e;
      if (auto baseRef = refAttribute(node, "baseType")) {
        const auto& base = buildType(module, *baseRef);
        if (const auto* p = base.unqualified().as<PrimitiveType>()) {
          e.isUnsigned = p->encoding == Encoding::UnsignedInt || p->encoding == Encoding::UnsignedChar;
        }
      }
      if (auto elems = refAttribute(node, "elements")) {
        const auto& tuple = module.lookupMetadata(*elems);
        for (const auto& [unused, item] : tuple.attributes) {
          if (item.kind != MetadataValue::Kind::Ref) continue;
          const auto& en = module.lookupMetadata(item.ref);
          auto label = textAttribute(en, "name");
          auto value = intAttribute(en, "value");
          if (label && value) e.labelFor.emplace(*value, *label);
        }
      }
      desc.detail = std::move(e);
      if (!intAttribute(node, "size")) throw MalformedMetadataError(id, "enumeration without size");
      return desc;
    }
    if (tag == "DW_TAG_structure_type" || tag == "DW_TAG_class_type" || tag == "DW_TAG_union_type") {
      desc.name = textAttribute(node, "name").value_or(tag == "DW_TAG_union_type" ? "<anonymous union>"
                                                                                  : "<anonymous struct>");
      desc.detail = StructureType{};
      fillStructure(module, id, node, desc);
      return desc;
    }
    throw MalformedMetadataError(id, "unsupported composite type '" + tag + "'");
  }
  if (kind == "SubroutineType") {
    std::string result = "void";
    std::string params;
    if (auto types = refAttribute(node, "types")) {
      const auto& tuple = module.lookupMetadata(*types);
      for (std::size_t k = 0; k < tuple.attributes.size(); ++k) {
        const auto& item = tuple.attributes[k].second;
        std::string name = "void";
        if (item.kind == MetadataValue::Kind::Ref) name = buildType(module, item.ref).name;
        if (k == 0) {
          result = name;
        } else {
          params += (k > 1 ? ", " : "") + name;
        }
      }
    }
    desc.name = result + " (" + params + ")";
    desc.detail = FunctionTypeDesc{};
    return desc;
  }
  throw MalformedMetadataError(id, "'" + node.kind + "' is not a type");
}

void DescriptorBuilder::fillStructure(const IrModule& module, MetadataId id, const MetadataNode& node,
                                      TypeDescriptor& desc) {
  if (hasFlag(node, "flags", "DIFlagFwdDecl")) return;
  if (!intAttribute(node, "size")) throw MalformedMetadataError(id, "structure without size");
  const bool isUnion = textAttribute(node, "tag").value_or("") == "DW_TAG_union_type";
  std::vector<MemberDescriptor> members;
  if (auto elems = refAttribute(node, "elements")) {
    const auto& tuple = module.lookupMetadata(*elems);
    for (const auto& [unused, item] : tuple.attributes) {
      if (item.kind != MetadataValue::Kind::Ref) continue;
      const auto& m = module.lookupMetadata(item.ref);
      if (normalizedKind(m) != "DerivedType") continue;  // methods, nested types
      const std::string tag = textAttribute(m, "tag").value_or("");
      const auto offset = static_cast<std::uint64_t>(intAttribute(m, "offset").value_or(0));
      auto baseRef = refAttribute(m, "baseType");
      if (tag == "DW_TAG_inheritance") {
        if (!baseRef) continue;
        const auto& base = buildType(module, *baseRef).unqualified();
        if (const auto* s = base.as<StructureType>()) {
          for (auto inherited : s->members) {
            inherited.bitOffset += offset;
            members.push_back(std::move(inherited));
          }
        }
        continue;
      }
      if (tag != "DW_TAG_member" || hasFlag(m, "flags", "DIFlagStaticMember")) continue;
      MemberDescriptor md;
      md.name = textAttribute(m, "name").value_or("");
      md.type = baseRef ? &buildType(module, *baseRef) : &foreignType();
      md.bitOffset = isUnion ? 0 : offset;
      if (hasFlag(m, "flags", "DIFlagBitField")) md.bitSize = static_cast<std::uint64_t>(intAttribute(m, "size").value_or(0));
      members.push_back(std::move(md));
    }
  }
  std::stable_sort(members.begin(), members.end(),
                   [](const MemberDescriptor& a, const MemberDescriptor& b) { return a.bitOffset < b.bitOffset; });
  std::get<StructureType>(desc.detail).members = std::move(members);
}

const ScopeDescriptor* DescriptorBuilder::functionScope(const IrModule& module, const IrFunction& fn) {
  if (!fn.subprogramRef) return nullptr;
  return &buildScope(module, *fn.subprogramRef);
}

void DescriptorBuilder::indexModule(const IrModule& module) {
  for (const auto& [id, node] : module.metadata) {
    const std::string kind = normalizedKind(node);
    if (kind == "LocalVariable" || kind == "GlobalVariableExpression") buildSymbol(module, id);
  }
  for (const auto& fn : module.functions) functionScope(module, fn);
}

}  // namespace irdb
