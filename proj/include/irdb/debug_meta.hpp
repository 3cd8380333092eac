#pragma once

// Descriptor model built from debug metadata: locations, symbols, types and
// scopes. Descriptors are owned by the DescriptorBuilder of a session and are
// referenced by plain pointers; identity of a descriptor is its address.

#include <cstdint>
#include <filesystem>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <stdexcept>
#include <string>
#include <unordered_map>
#include <variant>
#include <vector>

#include "irdb/ir_model.hpp"

namespace irdb {

class MalformedMetadataError : public std::runtime_error {
 public:
  MalformedMetadataError(MetadataId id, const std::string& message);
  MetadataId id;
};

// --- metadata accessors -----------------------------------------------------
// Both `DILocation(line:, column:)` and the shortened `Location(line:, col:)`
// spellings are accepted; these helpers hide the difference.

std::string normalizedKind(const MetadataNode& node);
const MetadataValue* attribute(const MetadataNode& node, std::string_view name);
std::optional<std::int64_t> intAttribute(const MetadataNode& node, std::string_view name);
std::optional<std::string> textAttribute(const MetadataNode& node, std::string_view name);
std::optional<MetadataId> refAttribute(const MetadataNode& node, std::string_view name);
bool hasFlag(const MetadataNode& node, std::string_view attributeName, std::string_view flag);

// --- sources ----------------------------------------------------------------

class SourceFile {
 public:
  SourceFile(std::string path, std::string content);

  const std::string& path() const { return path_; }
  const std::string& content() const { return content_; }
  std::size_t lineCount() const { return lineStarts_.size(); }
  // Character offset of (line, column), both 1-based; nullopt when outside the file.
  std::optional<std::size_t> offsetOf(std::uint32_t line, std::uint32_t column) const;
  std::string_view lineText(std::uint32_t line) const;

 private:
  std::string path_;
  std::string content_;
  std::vector<std::size_t> lineStarts_;
};

struct SourceSection {
  std::shared_ptr<const SourceFile> file;
  std::size_t charIndex = 0;
  std::size_t charLength = 0;
};

class SourceRegistry {
 public:
  SourceRegistry() = default;
  explicit SourceRegistry(std::vector<std::filesystem::path> searchRoots);

  void addSearchRoot(std::filesystem::path root);
  const std::vector<std::filesystem::path>& searchRoots() const { return roots_; }

  // Absolute DIFile(directory, filename) first, then each search root joined
  // with the filename. Outcomes are cached, so a path resolves the same way
  // for the lifetime of the registry.
  std::shared_ptr<const SourceFile> resolve(const std::string& directory, const std::string& filename);
  std::shared_ptr<const SourceFile> resolveFileName(const std::string& filename);

 private:
  std::shared_ptr<const SourceFile> load(const std::filesystem::path& candidate);

  std::vector<std::filesystem::path> roots_;
  std::map<std::string, std::shared_ptr<const SourceFile>> cache_;  // null = inaccessible
  std::map<std::pair<std::string, std::string>, std::shared_ptr<const SourceFile>> resolved_;
  std::mutex mutex_;
};

// --- descriptors ------------------------------------------------------------

struct TypeDescriptor;
struct ScopeDescriptor;
struct SymbolDescriptor;

struct LocationDescriptor {
  const ScopeDescriptor* scope = nullptr;  // lexical scope (block or function)
  std::uint32_t line = 1;
  std::uint32_t column = 1;
  std::string file;  // path as recorded in the metadata
  std::optional<SourceSection> resolvedSource;

  bool hasSource() const { return resolvedSource.has_value(); }
};

// Line-major lexical order; (l1,c1) <= (l2,c2).
bool lexicallyPrecedesOrEquals(const LocationDescriptor& a, const LocationDescriptor& b);

enum class Encoding { SignedInt, UnsignedInt, Float, Bool, SignedChar, UnsignedChar };

struct MemberDescriptor {
  std::string name;
  const TypeDescriptor* type = nullptr;
  std::uint64_t bitOffset = 0;
  std::uint64_t bitSize = 0;  // nonzero for bit-fields
};

struct PrimitiveType {
  Encoding encoding = Encoding::SignedInt;
};
struct PointerType {
  const TypeDescriptor* pointee = nullptr;  // null for void*
  bool reference = false;
};
struct ArrayType {
  const TypeDescriptor* element = nullptr;
  std::uint64_t length = 0;
};
struct StructureType {
  std::vector<MemberDescriptor> members;  // includes members of base classes
};
struct EnumerationType {
  std::map<std::int64_t, std::string> labelFor;
  bool isUnsigned = false;
};
struct QualifiedType {
  enum class Qualifier { Const, Volatile, Restrict, Typedef };
  Qualifier qualifier = Qualifier::Const;
  const TypeDescriptor* base = nullptr;
};
struct FunctionTypeDesc {};
struct ForeignType {};

struct TypeDescriptor {
  std::string name;
  std::uint64_t bitSize = 0;
  std::variant<PrimitiveType, PointerType, ArrayType, StructureType, EnumerationType, QualifiedType,
               FunctionTypeDesc, ForeignType>
      detail;

  template <typename T>
  const T* as() const {
    return std::get_if<T>(&detail);
  }
  // Strips typedefs and cv-qualifiers.
  const TypeDescriptor& unqualified() const;
};

struct ScopeDescriptor {
  enum class Kind { Expression, Symbol, Block, Function, Type, Named, CompilationUnit };
  Kind kind = Kind::CompilationUnit;
  std::string name;  // function source name, namespace name, type name, or CU file
  std::uint32_t line = 0;
  std::uint32_t column = 0;
  const ScopeDescriptor* parent = nullptr;
  const ScopeDescriptor* compilationUnit = nullptr;  // Function only
  const TypeDescriptor* type = nullptr;              // Type only
  std::vector<const SymbolDescriptor*> members;

  bool canHaveMembers() const { return kind != Kind::Expression && kind != Kind::Symbol; }
};

enum class Staticness { Static, Dynamic };

struct SymbolDescriptor {
  std::string name;
  const TypeDescriptor* type = nullptr;
  LocationDescriptor declaredAt;
  Staticness staticness = Staticness::Dynamic;
  const ScopeDescriptor* enclosingScope = nullptr;
  MetadataId metadata;       // DILocalVariable / DIGlobalVariable node
  int argumentNumber = 0;    // >0 for parameters
};

class DescriptorBuilder {
 public:
  explicit DescriptorBuilder(SourceRegistry& registry);
  DescriptorBuilder(const DescriptorBuilder&) = delete;
  DescriptorBuilder& operator=(const DescriptorBuilder&) = delete;

  SourceRegistry& registry() { return registry_; }

  const LocationDescriptor& buildLocation(const IrModule& module, MetadataId locRef);
  const ScopeDescriptor& buildScope(const IrModule& module, MetadataId scopeRef);
  const SymbolDescriptor& buildSymbol(const IrModule& module, MetadataId varRef);
  // nullopt builds the foreign type.
  const TypeDescriptor& buildType(const IrModule& module, std::optional<MetadataId> typeRef);
  const TypeDescriptor& foreignType();

  // Builds every variable and global descriptor of the module so that scope
  // member lists are complete before execution starts.
  void indexModule(const IrModule& module);

  // Function scope for a function's DISubprogram, if any.
  const ScopeDescriptor* functionScope(const IrModule& module, const IrFunction& fn);

 private:
  using Key = std::pair<const IrModule*, std::int64_t>;

  ScopeDescriptor& newScope();
  TypeDescriptor& newType();
  const ScopeDescriptor& compilationUnitFor(const IrModule& module, MetadataId fileOrUnit);
  std::pair<std::string, std::string> fileOf(const IrModule& module, MetadataId scopeRef, int depth = 0);
  LocationDescriptor makeLocation(const ScopeDescriptor* scope, std::uint32_t line, std::uint32_t column,
                                  const std::string& directory, const std::string& filename);
  void fillStructure(const IrModule& module, MetadataId id, const MetadataNode& node, TypeDescriptor& desc);
  void addMember(const ScopeDescriptor& scope, const SymbolDescriptor& symbol);

  SourceRegistry& registry_;
  std::vector<std::unique_ptr<ScopeDescriptor>> scopes_;
  std::vector<std::unique_ptr<TypeDescriptor>> types_;
  std::vector<std::unique_ptr<SymbolDescriptor>> symbols_;
  std::map<Key, const ScopeDescriptor*> scopeMemo_;
  std::map<Key, const TypeDescriptor*> typeMemo_;
  std::map<Key, const SymbolDescriptor*> symbolMemo_;
  std::map<Key, LocationDescriptor> locationMemo_;
  std::map<std::pair<const IrModule*, std::string>, const ScopeDescriptor*> unitMemo_;
  std::map<std::string, const ScopeDescriptor*> namespaces_;  // qualified name -> descriptor
  const TypeDescriptor* foreign_ = nullptr;
};

}  // namespace irdb
