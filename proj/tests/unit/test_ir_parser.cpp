#include "doctest.h"
#include "fixtures.hpp"

using namespace irdb;

namespace {

const char* kMinimal = R"(define i32 @main() {
entry:
  ret i32 0
}
)";

// (line, column) of the first occurrence of `needle`, both 1-based.
std::pair<std::uint32_t, std::uint32_t> positionOf(const std::string& text, const std::string& needle) {
  const auto at = text.find(needle);
  REQUIRE(at != std::string::npos);
  std::uint32_t line = 1, col = 1;
  for (std::size_t i = 0; i < at; ++i) {
    if (text[i] == '\n') {
      ++line;
      col = 1;
    } else {
      ++col;
    }
  }
  return {line, col};
}

const Instruction* firstCallTo(const IrFunction& fn, const std::string& callee) {
  for (const auto& bb : fn.blocks) {
    for (const auto& inst : bb.body) {
      if (inst.op == Opcode::Call && inst.operands[0].value.name == callee) return &inst;
    }
  }
  return nullptr;
}

}  // namespace

TEST_CASE("minimal module") {
  const auto m = parseModule(kMinimal, "min.ll");
  REQUIRE(m.functions.size() == 1);
  const auto& fn = m.functions[0];
  CHECK(fn.irName == "main");
  REQUIRE(fn.blocks.size() == 1);
  CHECK(fn.blocks[0].label == "entry");
  CHECK(fn.blocks[0].terminator.kind == Terminator::Kind::Return);
  CHECK(fn.blocks[0].terminator.value->value.integer == 0);
  CHECK(m.metadata.empty());
}

TEST_CASE("fact fixture shape") {
  const auto m = fixtures::load("fact.ll");
  const auto* fact = m.findFunction("fact");
  REQUIRE(fact);
  CHECK(fact->blocks.size() == 3);
  CHECK(fact->params.size() == 1);
  CHECK(fact->subprogramRef->value == 7);
  const auto& end = fact->blocks[2];
  REQUIRE(end.phis.size() == 1);
  CHECK(end.phis[0].incoming.size() == 2);
  CHECK(end.terminator.kind == Terminator::Kind::Return);
  CHECK(end.terminator.dbg->value == 23);
  CHECK(fact->blocks[0].terminator.kind == Terminator::Kind::CondBranch);
  CHECK(fact->blocks[0].terminator.targets == std::vector<std::string>{"if.then", "if.end"});
  CHECK(fact->blocks[0].terminator.targetIndex == std::vector<std::size_t>{1, 2});
}

TEST_CASE("shortened location spelling parses") {
  const char* text = R"(define i32 @f(i32 %x) !dbg !1 {
entry:
  %y = add i32 %x, 1, !dbg !2
  ret i32 %y, !dbg !3
}
!0 = !DIFile(filename: "f.c", directory: "/tmp")
!1 = distinct !DISubprogram(name: "f", file: !0, line: 1)
!2 = !Location(line: 4, col: 25, scope: !1)
!3 = !Location(line: 5, col: 3, scope: !1)
)";
  const auto m = parseModule(text, "short.ll");
  const auto& loc = m.lookupMetadata(MetadataId{3});
  CHECK(loc.kind == "Location");
  REQUIRE(loc.find("col"));
  CHECK(loc.find("col")->integer == 3);
  CHECK(m.functions[0].blocks[0].terminator.dbg->value == 3);
}

TEST_CASE("dbg intrinsic classification") {
  const auto m = fixtures::load("fact.ll");
  const auto& fact = *m.findFunction("fact");
  const auto* declare = firstCallTo(fact, "llvm.dbg.declare");
  REQUIRE(declare);
  auto d = parseIntrinsicCall(m, *declare);
  REQUIRE(d);
  CHECK(d->kind == DbgIntrinsic::Kind::Declare);
  CHECK(d->variableRef.value == 11);
  CHECK(d->valueOperand.value.kind == ValueRef::Kind::Register);
  CHECK(d->expressionEmpty);

  const auto* value = firstCallTo(fact, "llvm.dbg.value");
  REQUIRE(value);
  auto v = parseIntrinsicCall(m, *value);
  REQUIRE(v);
  CHECK(v->kind == DbgIntrinsic::Kind::Value);
  CHECK(v->variableRef.value == 14);
  CHECK(v->valueOperand.value.kind == ValueRef::Kind::Integer);
  CHECK(v->valueOperand.value.integer == 1);

  const auto* call = firstCallTo(fact, "fact");
  REQUIRE(call);
  CHECK_FALSE(parseIntrinsicCall(m, *call));
  CHECK(isDbgIntrinsicName("llvm.dbg.value"));
  CHECK_FALSE(isDbgIntrinsicName("printf"));
}

TEST_CASE("printf call is not an intrinsic") {
  const auto m = fixtures::load("loop.ll");
  const auto* call = firstCallTo(*m.findFunction("main"), "printf");
  REQUIRE(call);
  CHECK_FALSE(parseIntrinsicCall(m, *call));
}

TEST_CASE("intrinsic with a non-variable operand is malformed") {
  const char* text = R"(define void @f(i32 %x) {
entry:
  call void @llvm.dbg.value(metadata i32 %x, metadata !0, metadata !DIExpression())
  ret void
}
declare void @llvm.dbg.value(metadata, metadata, metadata)
!0 = !DIBasicType(name: "int", size: 32, encoding: DW_ATE_signed)
)";
  const auto m = parseModule(text, "bad.ll");
  const auto& inst = m.functions[0].blocks[0].body[0];
  CHECK_THROWS_AS(parseIntrinsicCall(m, inst), MalformedIntrinsicError);
}

TEST_CASE("switch terminator") {
  const char* text = R"(define i32 @pick(i32 %x) {
entry:
  switch i32 %x, label %other [
    i32 0, label %zero
    i32 7, label %seven
  ]
zero:
  ret i32 10
seven:
  ret i32 70
other:
  ret i32 -1
}
)";
  const auto m = parseModule(text, "switch.ll");
  const auto& t = m.functions[0].blocks[0].terminator;
  CHECK(t.kind == Terminator::Kind::Switch);
  CHECK(t.targets == std::vector<std::string>{"other", "zero", "seven"});
  REQUIRE(t.cases.size() == 2);
  CHECK(t.cases[1].value.integer == 7);
  CHECK(parseModule(printModule(m), "again.ll") == m);
}

TEST_CASE("parsing is deterministic") {
  const auto text = fixtures::read("namespace.ll");
  CHECK(parseModule(text, "a.ll") == parseModule(text, "a.ll"));
}

TEST_CASE("errors point at the offending token") {
  struct Broken {
    const char* text;
    const char* token;  // first occurrence marks the expected position
  };
  const Broken cases[] = {
      {"define i32 @f() {\nentry:\n  %a = add i32 1, 2\n  %a = add i32 3, 4\n  ret i32 %a\n}\n", "%a = add i32 3"},
      {"define i32 @f() {\nentry:\n  %a = frobnicate i32 1\n  ret i32 %a\n}\n", "frobnicate"},
      {"define i32 @f() {\nentry:\n  ret i32 %missing\n}\n", "%missing"},
      {"define i32 @f() {\nentry:\n  br label %nowhere\n}\n", "%nowhere"},
      {"define i32 @f() {\nentry:\n  %a = add i32 1, 2\n}\n", "}"},
      {"define i32 @f() {\nentry:\n  ret i32 0, !dbg !9\n}\n", "!9"},
      {"define i32 @f() {\nentry:\n  %c = icmp weird i32 1, 2\n  ret i32 0\n}\n", "weird"},
      {"@g = global i32 0\n@g = global i32 1\n", "@g = global i32 1"},
      {"define i32 @f() {\nentry:\n  ret i32 0\n}\ndefine i32 @f() {\nentry:\n  ret i32 1\n}\n", "@f() {\nentry:\n  ret i32 1"},
      {"define i32 @f() {\nentry:\n  %a = add i32 1, 2\n  %b = phi i32 [ 0, %entry ]\n  ret i32 %b\n}\n", "phi"},
      {"define i32 @f() {\nentry:\n  %x = trunc i32 \"s\" to i8\n  ret i32 0\n}\n", "\"s\""},
      {"!0 = !DIFile(filename: \"unterminated)\n", "\"unterminated"},
  };
  for (const auto& c : cases) {
    const std::string shown = c.text;
    CAPTURE(shown);
    const std::string text = c.text;
    auto [line, col] = positionOf(text, c.token);
    try {
      parseModule(text, "broken.ll");
      FAIL("no error for broken input");
    } catch (const ParseError& e) {
      CHECK(e.line == line);
      CHECK(e.column == col);
      CHECK_FALSE(e.message.empty());
      CHECK_FALSE(e.snippet.empty());
    }
  }
}

TEST_CASE("unresolved metadata reference is an error") {
  const char* text = "define i32 @f() {\nentry:\n  ret i32 0, !dbg !4\n}\n";
  CHECK_THROWS_AS(parseModule(text, "x.ll"), ParseError);
}

TEST_CASE("opaque pointers and typed pointers both parse") {
  const char* text = R"(define i32 @f(ptr %p, i32* %q) {
entry:
  %a = load i32, ptr %p, align 4
  %b = load i32, i32* %q, align 4
  %c = add i32 %a, %b
  ret i32 %c
}
)";
  const auto m = parseModule(text, "ptr.ll");
  CHECK(m.functions[0].params[0].type == Type::pointer(std::nullopt));
  CHECK(m.functions[0].params[1].type == Type::pointer(Type::integer(32)));
}
