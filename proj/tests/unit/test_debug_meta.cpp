#include <filesystem>

#include "doctest.h"
#include "fixtures.hpp"

using namespace irdb;

namespace {

// Id of the first metadata node whose kind contains `kind` and whose name is `name`.
MetadataId findNode(const IrModule& m, const std::string& kind, const std::string& name) {
  for (const auto& [id, node] : m.metadata) {
    if (node.kind.find(kind) == std::string::npos) continue;
    const auto* n = node.find("name");
    if (n && n->text == name) return id;
  }
  FAIL("no " << kind << " named " << name);
  return {};
}

MetadataId globalExpressionFor(const IrModule& m, const std::string& name) {
  const auto var = findNode(m, "DIGlobalVariable", name);
  for (const auto& [id, node] : m.metadata) {
    if (node.kind != "DIGlobalVariableExpression") continue;
    const auto* v = node.find("var");
    if (v && v->ref == var) return id;
  }
  FAIL("no expression for " << name);
  return {};
}

const SymbolDescriptor* member(const ScopeDescriptor& scope, const std::string& name) {
  for (const auto* s : scope.members) {
    if (s->name == name) return s;
  }
  return nullptr;
}

}  // namespace

TEST_CASE("location from a DILocation with sources available") {
  const auto m = fixtures::load("fact.ll");
  SourceRegistry registry({fixtures::dir()});
  DescriptorBuilder builder(registry);
  const auto& loc = builder.buildLocation(m, MetadataId{23});
  CHECK(loc.line == 5);
  CHECK(loc.column == 3);
  CHECK(loc.file == "fact.c");
  REQUIRE(loc.scope);
  CHECK(loc.scope->kind == ScopeDescriptor::Kind::Function);
  CHECK(loc.scope->name == "fact");
  REQUIRE(loc.hasSource());
  const auto& section = *loc.resolvedSource;
  CHECK(section.file->content().substr(section.charIndex, 6) == "return");
}

TEST_CASE("location without accessible source keeps line and column") {
  const auto m = fixtures::load("fact.ll");
  SourceRegistry registry;
  DescriptorBuilder builder(registry);
  const auto& loc = builder.buildLocation(m, MetadataId{23});
  CHECK(loc.line == 5);
  CHECK(loc.column == 3);
  CHECK_FALSE(loc.hasSource());
}

TEST_CASE("stale line past the end of the file") {
  const auto m = fixtures::load("stale.ll");
  SourceRegistry registry({fixtures::dir()});
  DescriptorBuilder builder(registry);
  bool sawStale = false;
  for (const auto& [id, node] : m.metadata) {
    if (node.kind != "DILocation") continue;
    const auto& loc = builder.buildLocation(m, id);
    if (loc.line >= 5000) {
      sawStale = true;
      CHECK_FALSE(loc.hasSource());
    } else {
      CHECK(loc.hasSource());
    }
  }
  CHECK(sawStale);
}

TEST_CASE("missing column defaults to 1") {
  const char* text = R"(define void @f() !dbg !1 {
entry:
  ret void, !dbg !2
}
!0 = !DIFile(filename: "x.c", directory: "/nonexistent")
!1 = distinct !DISubprogram(name: "f", file: !0, line: 1)
!2 = !DILocation(line: 7, scope: !1)
)";
  const auto m = parseModule(text, "x.ll");
  SourceRegistry registry;
  DescriptorBuilder builder(registry);
  const auto& loc = builder.buildLocation(m, MetadataId{2});
  CHECK(loc.line == 7);
  CHECK(loc.column == 1);
}

TEST_CASE("shortened spelling builds the same location") {
  const char* text = R"(define void @f() !dbg !1 {
entry:
  ret void, !dbg !2
}
!0 = !DIFile(filename: "x.c", directory: "/nonexistent")
!1 = distinct !DISubprogram(name: "f", file: !0, line: 1)
!2 = !Location(line: 4, col: 25, scope: !1)
)";
  const auto m = parseModule(text, "x.ll");
  SourceRegistry registry;
  DescriptorBuilder builder(registry);
  const auto& loc = builder.buildLocation(m, MetadataId{2});
  CHECK(loc.line == 4);
  CHECK(loc.column == 25);
  CHECK(loc.scope->name == "f");
}

TEST_CASE("descriptors are memoized") {
  const auto m = fixtures::load("fact.ll");
  SourceRegistry registry;
  DescriptorBuilder builder(registry);
  CHECK(&builder.buildScope(m, MetadataId{7}) == &builder.buildScope(m, MetadataId{7}));
  CHECK(&builder.buildType(m, MetadataId{10}) == &builder.buildType(m, MetadataId{10}));
  CHECK(&builder.buildSymbol(m, MetadataId{11}) == &builder.buildSymbol(m, MetadataId{11}));
  CHECK(&builder.buildLocation(m, MetadataId{23}) == &builder.buildLocation(m, MetadataId{23}));
}

TEST_CASE("function scope and its compilation unit") {
  const auto m = fixtures::load("fact.ll");
  SourceRegistry registry;
  DescriptorBuilder builder(registry);
  builder.indexModule(m);
  const auto& fact = builder.buildScope(m, MetadataId{7});
  CHECK(fact.name == "fact");
  REQUIRE(fact.compilationUnit);
  CHECK(fact.compilationUnit->kind == ScopeDescriptor::Kind::CompilationUnit);
  CHECK(fact.compilationUnit->members.empty());
  CHECK(fact.compilationUnit->parent == nullptr);
  CHECK(member(fact, "n"));
  CHECK(member(fact, "result"));
}

TEST_CASE("symbols of fact") {
  const auto m = fixtures::load("fact.ll");
  SourceRegistry registry;
  DescriptorBuilder builder(registry);
  const auto& n = builder.buildSymbol(m, MetadataId{11});
  CHECK(n.name == "n");
  CHECK(n.type->name == "int");
  CHECK(n.type->bitSize == 32);
  CHECK(n.staticness == Staticness::Dynamic);
  CHECK(n.argumentNumber == 1);
  CHECK(n.declaredAt.line == 1);
  const auto& result = builder.buildSymbol(m, MetadataId{14});
  CHECK(result.name == "result");
  CHECK(result.argumentNumber == 0);
  CHECK(result.declaredAt.line == 2);
  CHECK(result.enclosingScope == &builder.buildScope(m, MetadataId{7}));
}

TEST_CASE("basic type descriptor") {
  const auto m = fixtures::load("fact.ll");
  SourceRegistry registry;
  DescriptorBuilder builder(registry);
  const auto& t = builder.buildType(m, MetadataId{10});
  CHECK(t.name == "int");
  CHECK(t.bitSize == 32);
  REQUIRE(t.as<PrimitiveType>());
  CHECK(t.as<PrimitiveType>()->encoding == Encoding::SignedInt);
  CHECK(builder.buildType(m, std::nullopt).as<ForeignType>());
}

TEST_CASE("const qualifier shows in the type name") {
  const auto m = fixtures::load("namespace.ll");
  SourceRegistry registry;
  DescriptorBuilder builder(registry);
  const auto& bias = builder.buildSymbol(m, findNode(m, "DILocalVariable", "bias"));
  CHECK(bias.type->name == "const int");
  CHECK(bias.type->unqualified().name == "int");
}

TEST_CASE("enumeration labels") {
  const auto m = fixtures::load("enum.ll");
  SourceRegistry registry;
  DescriptorBuilder builder(registry);
  const auto& op = builder.buildType(m, findNode(m, "DICompositeType", "Op"));
  REQUIRE(op.as<EnumerationType>());
  const auto& labels = op.as<EnumerationType>()->labelFor;
  CHECK(labels.at(0) == "ADD");
  CHECK(labels.at(1) == "SUB");
  CHECK(labels.at(2) == "MUL");
  CHECK(labels.at(3) == "DIV");
}

TEST_CASE("reference parameter type") {
  const auto m = fixtures::load("enum.ll");
  SourceRegistry registry;
  DescriptorBuilder builder(registry);
  builder.indexModule(m);
  bool found = false;
  for (const auto& [id, node] : m.metadata) {
    if (node.kind != "DILocalVariable" || node.find("name")->text != "op" || !node.find("arg")) continue;
    const auto& sym = builder.buildSymbol(m, id);
    if (sym.type->as<PointerType>() && sym.type->as<PointerType>()->reference) {
      found = true;
      CHECK(sym.type->name == "const Op &");
    }
  }
  CHECK(found);
}

TEST_CASE("base class members are flattened") {
  const auto m = fixtures::load("namespace.ll");
  SourceRegistry registry;
  DescriptorBuilder builder(registry);
  const auto& shape = builder.buildType(m, findNode(m, "DICompositeType", "Shape"));
  REQUIRE(shape.as<StructureType>());
  const auto& members = shape.as<StructureType>()->members;
  REQUIRE(members.size() == 3);
  CHECK(members[0].name == "id");
  CHECK(members[0].bitOffset == 0);
  CHECK(members[1].name == "w");
  CHECK(members[1].bitOffset == 32);
  CHECK(members[2].name == "h");
  CHECK(members[2].bitOffset == 64);
  CHECK(shape.bitSize == 96);
}

TEST_CASE("bit-field members") {
  const auto m = fixtures::load("struct.ll");
  SourceRegistry registry;
  DescriptorBuilder builder(registry);
  const auto& rect = builder.buildType(m, findNode(m, "DICompositeType", "Rect"));
  const auto& members = rect.as<StructureType>()->members;
  REQUIRE(members.size() == 5);
  CHECK(members[2].name == "flags");
  CHECK(members[2].bitOffset == 128);
  CHECK(members[2].bitSize == 3);
  CHECK(members[3].name == "kind");
  CHECK(members[3].bitOffset == 131);
  CHECK(members[3].bitSize == 5);
}

TEST_CASE("array type") {
  const auto m = fixtures::load("struct.ll");
  SourceRegistry registry;
  DescriptorBuilder builder(registry);
  const auto& values = builder.buildSymbol(m, findNode(m, "DILocalVariable", "values"));
  REQUIRE(values.type->as<ArrayType>());
  CHECK(values.type->as<ArrayType>()->length == 4);
  CHECK(values.type->name == "int [4]");
  CHECK(values.type->bitSize == 128);
}

TEST_CASE("globals are static members of their unit") {
  const auto m = fixtures::load("global.ll");
  SourceRegistry registry;
  DescriptorBuilder builder(registry);
  builder.indexModule(m);
  const auto& counter = builder.buildSymbol(m, globalExpressionFor(m, "counter"));
  CHECK(counter.name == "counter");
  CHECK(counter.staticness == Staticness::Static);
  REQUIRE(counter.enclosingScope);
  CHECK(counter.enclosingScope->kind == ScopeDescriptor::Kind::CompilationUnit);
  CHECK(member(*counter.enclosingScope, "counter"));
  CHECK(member(*counter.enclosingScope, "limit"));
}

TEST_CASE("namespace scopes are shared between modules") {
  const auto a = fixtures::load("namespace.ll");
  const auto b = fixtures::load("namespace.ll");
  SourceRegistry registry;
  DescriptorBuilder builder(registry);
  const auto id = findNode(a, "DINamespace", "geo");
  const auto& first = builder.buildScope(a, id);
  const auto& second = builder.buildScope(b, id);
  CHECK(&first == &second);
  CHECK(first.kind == ScopeDescriptor::Kind::Named);
  CHECK(first.name == "geo");
  const auto& detail = builder.buildScope(a, findNode(a, "DINamespace", "detail"));
  CHECK(detail.name == "geo::detail");
  CHECK(detail.parent == &first);
  builder.indexModule(a);
  CHECK(member(first, "scale"));
  CHECK(member(detail, "offset"));
}

TEST_CASE("scope chains terminate in a compilation unit") {
  for (const auto& name : fixtures::corpus()) {
    CAPTURE(name);
    const auto m = fixtures::load(name);
    SourceRegistry registry;
    DescriptorBuilder builder(registry);
    for (const auto& [id, node] : m.metadata) {
      if (node.kind != "DILocation") continue;
      const ScopeDescriptor* s = builder.buildLocation(m, id).scope;
      int guard = 0;
      while (s && s->kind != ScopeDescriptor::Kind::CompilationUnit && guard++ < 100) {
        s = s->kind == ScopeDescriptor::Kind::Function && s->compilationUnit ? s->compilationUnit : s->parent;
      }
      CHECK(s);
      CHECK(guard < 100);
    }
  }
}

TEST_CASE("lexical block scopes nest inside their function") {
  const auto m = fixtures::load("loop.ll");
  SourceRegistry registry;
  DescriptorBuilder builder(registry);
  const auto& i = builder.buildSymbol(m, findNode(m, "DILocalVariable", "i"));
  REQUIRE(i.enclosingScope);
  CHECK(i.enclosingScope->kind == ScopeDescriptor::Kind::Block);
  REQUIRE(i.enclosingScope->parent);
  CHECK(i.enclosingScope->parent->name == "main");
}

TEST_CASE("source resolution is stable") {
  SourceRegistry registry({fixtures::dir()});
  auto first = registry.resolve(".", "fact.c");
  auto second = registry.resolve(".", "fact.c");
  REQUIRE(first);
  CHECK(first == second);
  CHECK(first->lineCount() >= 10);
  CHECK(first->lineText(5) == "  return result;");
  CHECK(first->offsetOf(5, 3));
  CHECK_FALSE(first->offsetOf(5000, 1));
  CHECK_FALSE(registry.resolve(".", "no-such-file.c"));
  CHECK_FALSE(registry.resolve(".", "no-such-file.c"));
}

TEST_CASE("absolute file paths resolve without search roots") {
  SourceRegistry registry;
  auto file = registry.resolve(std::filesystem::absolute(fixtures::dir()).string(), "fact.c");
  CHECK(file);
}

TEST_CASE("malformed metadata is reported") {
  const auto m = fixtures::load("fact.ll");
  SourceRegistry registry;
  DescriptorBuilder builder(registry);
  CHECK_THROWS_AS(builder.buildScope(m, MetadataId{10}), MalformedMetadataError);
  CHECK_THROWS_AS(builder.buildLocation(m, MetadataId{999}), UnknownMetadataError);
}

TEST_CASE("lexical order") {
  LocationDescriptor a, b;
  a.line = 3;
  a.column = 9;
  b.line = 3;
  b.column = 7;
  CHECK(lexicallyPrecedesOrEquals(b, a));
  CHECK_FALSE(lexicallyPrecedesOrEquals(a, b));
  CHECK(lexicallyPrecedesOrEquals(a, a));
  b.line = 4;
  b.column = 1;
  CHECK(lexicallyPrecedesOrEquals(a, b));
}
