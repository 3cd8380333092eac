#pragma once

// Random straight-line functions with debug info. Every variable gets a
// declaration line drawn at random, independent of where its dbg intrinsic
// sits in the IR, so the scope filter has something to reject.

#include <algorithm>
#include <random>
#include <sstream>
#include <string>
#include <vector>

namespace synthetic {

struct Variable {
  std::string name;
  unsigned line = 0;
  unsigned column = 0;
  bool inMemory = true;
};

struct Program {
  std::string text;
  std::vector<Variable> variables;
  unsigned statements = 0;
};

inline Program generate(std::uint32_t seed) {
  std::mt19937 rng(seed);
  auto pick = [&](unsigned lo, unsigned hi) { return std::uniform_int_distribution<unsigned>(lo, hi)(rng); };

  Program p;
  const unsigned varCount = pick(1, 8);
  p.statements = pick(3, 14);
  std::vector<unsigned> lines;
  for (unsigned i = 0; i < varCount; ++i) lines.push_back(pick(1, p.statements + 2));
  std::shuffle(lines.begin(), lines.end(), rng);
  for (unsigned i = 0; i < varCount; ++i) p.variables.push_back({"v" + std::to_string(i), lines[i], pick(1, 30), pick(0, 2) != 0});

  std::ostringstream ir, md;
  ir << "define i32 @main() !dbg !1 {\nentry:\n";
  int next = 100;  // metadata ids for locations
  for (unsigned i = 0; i < varCount; ++i) {
    const auto& v = p.variables[i];
    if (v.inMemory) {
      ir << "  %" << v.name << " = alloca i32, align 4\n";
      ir << "  store i32 " << i << ", i32* %" << v.name << ", align 4\n";
      ir << "  call void @llvm.dbg.declare(metadata i32* %" << v.name << ", metadata !" << 10 + i
         << ", metadata !DIExpression()), !dbg !" << 10 + i + 40 << "\n";
    } else {
      ir << "  call void @llvm.dbg.value(metadata i32 " << i * 7 << ", metadata !" << 10 + i
         << ", metadata !DIExpression()), !dbg !" << 10 + i + 40 << "\n";
    }
  }
  std::string prev = "0";
  for (unsigned s = 0; s < p.statements; ++s) {
    const int id = next++;
    ir << "  %s" << s << " = add i32 " << prev << ", " << s + 1 << ", !dbg !" << id << "\n";
    prev = "%s" + std::to_string(s);
    md << "!" << id << " = !DILocation(line: " << s + 1 << ", column: " << pick(1, 30) << ", scope: !1)\n";
  }
  ir << "  ret i32 0, !dbg !" << next << "\n}\n";
  md << "!" << next << " = !DILocation(line: " << p.statements + 1 << ", column: 1, scope: !1)\n";

  ir << "declare void @llvm.dbg.declare(metadata, metadata, metadata)\n";
  ir << "declare void @llvm.dbg.value(metadata, metadata, metadata)\n";
  ir << "!llvm.dbg.cu = !{!0}\n";
  ir << "!0 = distinct !DICompileUnit(language: DW_LANG_C99, file: !2, producer: \"synthetic\", isOptimized: false, "
        "runtimeVersion: 0, emissionKind: FullDebug)\n";
  ir << "!1 = distinct !DISubprogram(name: \"main\", scope: !2, file: !2, line: 1, scopeLine: 1, spFlags: "
        "DISPFlagDefinition, unit: !0)\n";
  ir << "!2 = !DIFile(filename: \"synthetic.c\", directory: \"/nonexistent\")\n";
  ir << "!3 = !DIBasicType(name: \"int\", size: 32, encoding: DW_ATE_signed)\n";
  for (unsigned i = 0; i < varCount; ++i) {
    const auto& v = p.variables[i];
    ir << "!" << 10 + i << " = !DILocalVariable(name: \"" << v.name << "\", scope: !1, file: !2, line: " << v.line
       << ", type: !3)\n";
    ir << "!" << 10 + i + 40 << " = !DILocation(line: " << v.line << ", column: " << v.column << ", scope: !1)\n";
  }
  ir << md.str();
  p.text = ir.str();
  return p;
}

// Stand-in source text long enough for every generated location.
inline std::string sourceText(const Program& p) {
  std::string text;
  for (unsigned i = 0; i < p.statements + 4; ++i) text += "  x = x + 1; /* filler filler filler */\n";
  return text;
}

}  // namespace synthetic
