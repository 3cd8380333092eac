#include "doctest.h"
#include "fixtures.hpp"
#include "oracle.hpp"

using namespace irdb;

namespace {

StopEvent runTo(fixtures::Debugger& d, const std::string& file, std::uint32_t line, std::uint32_t column) {
  d.engine.setBreakpoints(file, {{line, column, true}});
  auto stop = d.engine.resume(ResumeMode::Continue);
  REQUIRE(stop.reason == StopEvent::Reason::Breakpoint);
  return stop;
}

const SymbolDescriptor* symbolNamed(const Frame& frame, const std::string& name) {
  for (const auto& [sym, binding] : frame.bindings.entries) {
    if (sym->name == name) return sym;
  }
  return nullptr;
}

std::map<std::string, std::string> children(const DisplayNode& node, const Memory& memory) {
  std::map<std::string, std::string> out;
  for (const auto& [name, value] : node.children) out[name] = render(value, memory).display;
  return out;
}

const TypeDescriptor& intType() {
  static TypeDescriptor t{"int", 32, PrimitiveType{Encoding::SignedInt}};
  return t;
}

}  // namespace

TEST_CASE("abstract values over runtime bits") {
  const auto v = AbstractValue::fromRuntime(RuntimeValue::integer(0xabcd, 16));
  CHECK(v.readBits(0, 8) == 0xcd);
  CHECK(v.readBits(4, 8) == 0xbc);
  CHECK(v.readBits(8, 8) == 0xab);
  CHECK_FALSE(v.readBits(0, 65));
  CHECK_FALSE(v.readBits(60, 8));
  CHECK(v.slice(8, 8).readBits(0, 8) == 0xab);
  CHECK_FALSE(AbstractValue::unavailable().readBits(0, 1));
}

TEST_CASE("abstract values over memory") {
  Memory mem;
  const auto a = mem.allocate(Region::Heap, 4, 4);
  const std::uint8_t bytes[] = {0x2d, 0x01, 0x00, 0x00};
  mem.write(a, bytes);
  const auto v = AbstractValue::fromMemory(mem, a, 32);
  CHECK(v.readBits(0, 32) == 301);
  CHECK(v.address() == a);
  CHECK(v.readBytes() == std::vector<std::uint8_t>{0x2d, 0x01, 0x00, 0x00});
  CHECK_FALSE(AbstractValue::fromMemory(mem, a + 2, 32).readBits(0, 32));
}

TEST_CASE("primitive rendering") {
  Memory mem;
  CHECK(render({&intType(), AbstractValue::fromRuntime(RuntimeValue::integer(0xfffffffe, 32))}, mem).display == "-2");
  TypeDescriptor u{"unsigned int", 32, PrimitiveType{Encoding::UnsignedInt}};
  CHECK(render({&u, AbstractValue::fromRuntime(RuntimeValue::integer(0xfffffffe, 32))}, mem).display == "4294967294");
  TypeDescriptor c{"char", 8, PrimitiveType{Encoding::SignedChar}};
  CHECK(render({&c, AbstractValue::fromRuntime(RuntimeValue::integer('a', 8))}, mem).display == "97 'a'");
  TypeDescriptor b{"_Bool", 8, PrimitiveType{Encoding::Bool}};
  CHECK(render({&b, AbstractValue::fromRuntime(RuntimeValue::integer(1, 8))}, mem).display == "true");
  CHECK(render({&intType(), AbstractValue::unavailable()}, mem).display == kNotAvailable);
  CHECK(render({nullptr, AbstractValue::unavailable()}, mem).display == kNotAvailable);
}

TEST_CASE("rendering is pure") {
  Memory mem;
  const auto a = mem.allocate(Region::Heap, 4, 4);
  const std::uint8_t bytes[] = {5, 0, 0, 0};
  mem.write(a, bytes);
  const SourceValue v{&intType(), AbstractValue::fromMemory(mem, a, 32)};
  const auto first = render(v, mem);
  const auto second = render(v, mem);
  CHECK(first.display == "5");
  CHECK(second.display == first.display);
  CHECK(mem.read(a, 4) == std::vector<std::uint8_t>{5, 0, 0, 0});
}

TEST_CASE("dead memory is not available") {
  Memory mem;
  const auto a = mem.allocate(Region::Heap, 4, 4);
  const SourceValue v{&intType(), AbstractValue::fromMemory(mem, a, 32)};
  mem.freeHeap(a);
  CHECK(render(v, mem).display == kNotAvailable);
}

TEST_CASE("symbol values follow dbg.value") {
  fixtures::Debugger d;
  d.launch("fact.ll", "fact", {"5"});
  d.engine.resume(ResumeMode::StepExpr);
  auto& frame = d.engine.interpreter()->top();
  const auto* result = symbolNamed(frame, "result");
  REQUIRE(result);
  const auto* binding = frame.bindings.find(result);
  REQUIRE(binding);
  CHECK(binding->kind == Binding::Kind::Constant);
  CHECK(d.value("result") == "1");
  const auto* n = symbolNamed(frame, "n");
  REQUIRE(n);
  CHECK(frame.bindings.find(n)->kind == Binding::Kind::Memory);
  CHECK(d.value("n") == "5");

  // back in the outermost activation at the return: result came from the phi
  d.engine.setBreakpoints("fact.c", {{5, 3, true}});
  for (int i = 0; i < 6; ++i) d.engine.resume(ResumeMode::Continue);
  CHECK(d.depth() == 1);
  CHECK(d.value("result") == "120");
  auto& outer = d.engine.interpreter()->top();
  CHECK(outer.bindings.find(symbolNamed(outer, "result"))->kind == Binding::Kind::Register);
}

TEST_CASE("recursive activations keep separate bindings") {
  fixtures::Debugger d;
  d.launch("fact.ll", "fact", {"3"});
  runTo(d, "fact.c", 5, 3);
  auto stack = d.engine.buildStack();
  REQUIRE(stack.size() == 4);
  CHECK(d.value("n", 0) == "0");
  CHECK(d.value("n", 1) == "1");
  CHECK(d.value("n", 2) == "2");
  CHECK(d.value("n", 3) == "3");
}

TEST_CASE("globals") {
  fixtures::Debugger d;
  d.launch("global.ll");
  runTo(d, "global.c", 6, 3);
  CHECK(d.value("counter") == "1");
  CHECK(d.value("limit") == "3");
  CHECK(d.value("by") == "1");
}

TEST_CASE("enum values render as labels, references through their target") {
  fixtures::Debugger d;
  d.launch("enum.ll");
  runTo(d, "enum.cpp", 7, 13);
  auto stack = d.engine.buildStack();
  REQUIRE(stack.size() >= 2);
  CHECK(stack[0].functionSourceName == "apply");
  bool sawOp = false;
  for (const auto& scope : d.engine.collectScopes(stack[0].frameId)) {
    for (const auto& [name, v] : scope.variables) {
      if (name != "op") continue;
      sawOp = true;
      const auto node = render(v, d.engine.interpreter()->memory());
      CHECK(node.display == "ADD");
      CHECK(node.typeName == "const Op &");
    }
  }
  CHECK(sawOp);
  CHECK(d.value("op", 1) == "ADD");
}

TEST_CASE("object pointers render as hex with member children") {
  fixtures::Debugger d;
  d.launch("enum.ll");
  runTo(d, "enum.cpp", 7, 13);
  const auto& memory = d.engine.interpreter()->memory();
  auto stack = d.engine.buildStack();
  for (const auto& scope : d.engine.collectScopes(stack[0].frameId)) {
    for (const auto& [name, v] : scope.variables) {
      if (name != "this") continue;
      const auto node = render(v, memory);
      CHECK(node.display.rfind("0x", 0) == 0);
      CHECK(children(node, memory) == std::map<std::string, std::string>{{"acc", "10"}});
    }
  }
  CHECK(d.value("calc", 1).rfind("0x", 0) == 0);
}

TEST_CASE("foreign handles render as interop values") {
  fixtures::Debugger d;
  d.launch("foreign.ll");
  runTo(d, "foreign.c", 15, 3);
  CHECK(d.value("handle") == kInteropValue);
  CHECK(d.value("cb") == kInteropValue);
}

TEST_CASE("struct members, bit-fields and arrays") {
  fixtures::Debugger d;
  d.launch("struct.ll");
  runTo(d, "struct.c", 23, 11);
  const auto& memory = d.engine.interpreter()->memory();
  auto stack = d.engine.buildStack();
  for (const auto& scope : d.engine.collectScopes(stack[0].frameId)) {
    for (const auto& [name, v] : scope.variables) {
      const auto node = render(v, memory);
      if (name == "r") {
        auto kids = children(node, memory);
        CHECK(kids["flags"] == "5 '\\x05'");
        CHECK(kids["kind"] == "17 '\\x11'");
        CHECK(kids["id"] == "-3");
        // nested struct
        for (const auto& [cn, cv] : node.children) {
          if (cn == "max") CHECK(children(render(cv, memory), memory) == std::map<std::string, std::string>{{"x", "7"}, {"y", "9"}});
        }
      }
      if (name == "values") {
        CHECK(children(node, memory) ==
              std::map<std::string, std::string>{{"[0]", "3"}, {"[1]", "1"}, {"[2]", "4"}, {"[3]", "1"}});
      }
    }
  }
}

TEST_CASE("freed list nodes are not available") {
  fixtures::Debugger d;
  d.launch("list.ll");
  runTo(d, "list.c", 27, 1);
  const auto& memory = d.engine.interpreter()->memory();
  auto stack = d.engine.buildStack();
  bool checked = false;
  for (const auto& scope : d.engine.collectScopes(stack[0].frameId)) {
    for (const auto& [name, v] : scope.variables) {
      if (name == "p") FAIL("p is out of scope here");
      if (name != "head") continue;
      checked = true;
      // head still points at the node that was just freed
      const auto node = render(v, memory);
      CHECK(node.display.rfind("0x", 0) == 0);
      CHECK(node.display != "0x0");
      CHECK(node.children.empty());
    }
  }
  CHECK(checked);
  CHECK(d.value("total") == "46");
  CHECK(d.value("next").rfind("0x", 0) == 0);
}

TEST_CASE("live list nodes expose their members") {
  fixtures::Debugger d;
  d.launch("list.ll");
  runTo(d, "list.c", 19, 1);
  const auto& memory = d.engine.interpreter()->memory();
  auto stack = d.engine.buildStack();
  for (const auto& scope : d.engine.collectScopes(stack[0].frameId)) {
    for (const auto& [name, v] : scope.variables) {
      if (name != "head") continue;
      const auto kids = children(render(v, memory), memory);
      CHECK(kids.at("value") == "15");
      CHECK(kids.at("next").rfind("0x", 0) == 0);
    }
  }
}

TEST_CASE("effectively final symbols") {
  fixtures::Debugger d;
  d.launch("fact.ll", "fact", {"2"});
  auto* tracker = d.engine.tracker();
  const auto& fn = *d.engine.module()->findFunction("fact");
  CHECK(tracker->isEffectivelyFinal(fn, MetadataId{11}));
  CHECK_FALSE(tracker->isEffectivelyFinal(fn, MetadataId{14}));
}

TEST_CASE("non-empty expressions leave the value undefined") {
  const char* text = R"(define i32 @f(i32 %x) !dbg !1 {
entry:
  call void @llvm.dbg.value(metadata i32 %x, metadata !3, metadata !DIExpression(DW_OP_plus_uconst, 4)), !dbg !5
  call void @llvm.dbg.value(metadata i32 %x, metadata !4, metadata !DIExpression()), !dbg !5
  ret i32 %x, !dbg !5
}
declare void @llvm.dbg.value(metadata, metadata, metadata)
!0 = !DIFile(filename: "x.c", directory: "/nonexistent")
!1 = distinct !DISubprogram(name: "f", file: !0, line: 1)
!2 = !DIBasicType(name: "int", size: 32, encoding: DW_ATE_signed)
!3 = !DILocalVariable(name: "shifted", scope: !1, file: !0, line: 1, type: !2)
!4 = !DILocalVariable(name: "plain", scope: !1, file: !0, line: 1, type: !2)
!5 = !DILocation(line: 2, column: 3, scope: !1)
)";
  const auto m = parseModule(text, "x.ll");
  SourceRegistry registry;
  DescriptorBuilder builder(registry);
  Interpreter interp(m, builder);
  ValueTracker tracker(interp, builder);
  tracker.attach();
  interp.start("f", {RuntimeValue::integer(9, 32)});
  interp.step();
  interp.step();
  const auto& frame = interp.top();
  const auto& shifted = builder.buildSymbol(m, MetadataId{3});
  const auto& plain = builder.buildSymbol(m, MetadataId{4});
  CHECK(frame.bindings.find(&shifted)->kind == Binding::Kind::Undefined);
  CHECK_FALSE(tracker.resolveSymbol(frame, shifted));
  auto v = tracker.resolveSymbol(frame, plain);
  REQUIRE(v);
  CHECK(render(*v, interp.memory()).display == "9");
}

TEST_CASE("memory-bound values agree with the byte decoder") {
  fixtures::Debugger d;
  d.launch("struct.ll");
  std::size_t compared = 0;
  for (StopEvent s = d.engine.lastStop(); s.reason != StopEvent::Reason::Exited; s = d.engine.resume(ResumeMode::StepInto)) {
    const auto* m = d.engine.module();
    const auto& memory = d.engine.interpreter()->memory();
    for (const auto& frame : d.engine.interpreter()->frames()) {
      for (const auto& [sym, binding] : frame->bindings.entries) {
        if (binding.kind != Binding::Kind::Memory) continue;
        const auto expected = oracle::decode(*m, oracle::variableType(*m, sym->metadata), memory, binding.address);
        auto value = d.engine.tracker()->resolveSymbol(*frame, *sym);
        REQUIRE(value);
        const auto node = render(*value, memory);
        CHECK(node.display == expected.display);
        if (!expected.children.empty()) {
          std::vector<std::pair<std::string, std::string>> got;
          for (const auto& [n, v] : node.children) got.emplace_back(n, render(v, memory).display);
          CHECK(got == expected.children);
        }
        ++compared;
      }
    }
  }
  CHECK(compared > 20);
}
