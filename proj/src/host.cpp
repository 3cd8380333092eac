#include <cstdio>
#include <cstring>

#include "irdb/interpreter.hpp"

namespace irdb {

namespace {

HostCallResult value(RuntimeValue v) {
  HostCallResult r;
  r.value = std::move(v);
  return r;
}

RuntimeValue arg(const std::vector<RuntimeValue>& args, std::size_t i) {
  return i < args.size() ? args[i] : RuntimeValue::integer(0, 64);
}

// printf subset: flags, width, precision, length modifiers and d i u x X o c s p %.
std::string format(Interpreter& in, const std::string& fmt, const std::vector<RuntimeValue>& args, std::size_t next) {
  std::string out;
  for (std::size_t i = 0; i < fmt.size(); ++i) {
    if (fmt[i] != '%') {
      out.push_back(fmt[i]);
      continue;
    }
    std::size_t j = i + 1;
    std::string spec = "%";
    while (j < fmt.size() && std::strchr("-+ #0", fmt[j])) spec.push_back(fmt[j++]);
    auto number = [&] {
      if (j < fmt.size() && fmt[j] == '*') {
        spec += std::to_string(static_cast<int>(arg(args, next++).asSigned()));
        ++j;
      }
      while (j < fmt.size() && std::isdigit(static_cast<unsigned char>(fmt[j]))) spec.push_back(fmt[j++]);
    };
    number();
    if (j < fmt.size() && fmt[j] == '.') {
      spec.push_back(fmt[j++]);
      number();
    }
    std::string length;
    while (j < fmt.size() && std::strchr("hlzjt", fmt[j])) length.push_back(fmt[j++]);
    if (j >= fmt.size()) {
      out += fmt.substr(i);
      break;
    }
    const char conv = fmt[j];
    i = j;
    char buf[512];
    switch (conv) {
      case '%':
        out.push_back('%');
        continue;
      case 'd':
      case 'i': {
        long long v = arg(args, next++).asSigned();
        if (length == "hh") v = static_cast<signed char>(v);
        else if (length == "h") v = static_cast<short>(v);
        else if (length.empty()) v = static_cast<int>(v);
        std::snprintf(buf, sizeof buf, (spec + "lld").c_str(), v);
        break;
      }
      case 'u':
      case 'x':
      case 'X':
      case 'o': {
        unsigned long long v = arg(args, next++).raw;
        if (length == "hh") v = static_cast<unsigned char>(v);
        else if (length == "h") v = static_cast<unsigned short>(v);
        else if (length.empty()) v = static_cast<unsigned>(v);
        std::snprintf(buf, sizeof buf, (spec + "ll" + conv).c_str(), v);
        break;
      }
      case 'c':
        std::snprintf(buf, sizeof buf, (spec + "c").c_str(), static_cast<int>(arg(args, next++).raw & 0xff));
        break;
      case 's': {
        const auto s = in.readCString(arg(args, next++).raw);
        const int n = std::snprintf(nullptr, 0, (spec + "s").c_str(), s.c_str());
        std::string tmp(static_cast<std::size_t>(n) + 1, '\0');
        std::snprintf(tmp.data(), tmp.size(), (spec + "s").c_str(), s.c_str());
        tmp.pop_back();
        out += tmp;
        continue;
      }
      case 'p':
        std::snprintf(buf, sizeof buf, "0x%llx", static_cast<unsigned long long>(arg(args, next++).raw));
        break;
      default:
        throw Trap(std::string("unsupported printf conversion %") + conv);
    }
    out += buf;
  }
  return out;
}

std::uint64_t heapAlloc(Interpreter& in, std::uint64_t size) {
  return in.memory().allocate(Region::Heap, size, 16);
}

}  // namespace

HostRegistry HostRegistry::standard() {
  HostRegistry r;
  r.add("printf", [](Interpreter& in, std::vector<RuntimeValue>& args) {
    const auto text = format(in, in.readCString(arg(args, 0).raw), args, 1);
    in.emitOutput(text);
    return value(RuntimeValue::integer(text.size(), 32));
  });
  r.add("puts", [](Interpreter& in, std::vector<RuntimeValue>& args) {
    in.emitOutput(in.readCString(arg(args, 0).raw) + "\n");
    return value(RuntimeValue::integer(1, 32));
  });
  r.add("putchar", [](Interpreter& in, std::vector<RuntimeValue>& args) {
    in.emitOutput(std::string(1, static_cast<char>(arg(args, 0).raw & 0xff)));
    return value(RuntimeValue::integer(arg(args, 0).raw & 0xff, 32));
  });
  r.add("malloc", [](Interpreter& in, std::vector<RuntimeValue>& args) {
    return value(RuntimeValue::pointer(heapAlloc(in, arg(args, 0).raw)));
  });
  r.add("calloc", [](Interpreter& in, std::vector<RuntimeValue>& args) {
    return value(RuntimeValue::pointer(heapAlloc(in, arg(args, 0).raw * arg(args, 1).raw)));
  });
  r.add("realloc", [](Interpreter& in, std::vector<RuntimeValue>& args) {
    const auto old = arg(args, 0).raw;
    const auto size = arg(args, 1).raw;
    const auto fresh = heapAlloc(in, size);
    if (old != 0) {
      const Allocation* a = in.memory().find(old);
      if (!a || a->region != Region::Heap || a->base != old) throw Trap("realloc of invalid pointer");
      const auto bytes = in.memory().read(old, std::min(size, a->size));
      if (!bytes.empty()) in.memory().write(fresh, bytes);
      in.memory().freeHeap(old);
    }
    return value(RuntimeValue::pointer(fresh));
  });
  r.add("free", [](Interpreter& in, std::vector<RuntimeValue>& args) {
    in.memory().freeHeap(arg(args, 0).raw);
    return HostCallResult{};
  });
  r.add("strlen", [](Interpreter& in, std::vector<RuntimeValue>& args) {
    return value(RuntimeValue::integer(in.readCString(arg(args, 0).raw).size(), 64));
  });
  r.add("abort", [](Interpreter&, std::vector<RuntimeValue>&) -> HostCallResult { throw Trap("abort() called"); });
  r.add("exit", [](Interpreter&, std::vector<RuntimeValue>& args) {
    HostCallResult res;
    res.exitCode = static_cast<int>(arg(args, 0).raw & 0xff);
    return res;
  });
  // Simulated cross-language values. A foreign value is an opaque handle; the
  // invoker calls back into guest code when handed a guest function pointer.
  r.add("foreign_value", [](Interpreter& in, std::vector<RuntimeValue>&) {
    return value(RuntimeValue::pointer(in.newForeignHandle()));
  });
  r.add("foreign_invoke", [](Interpreter& in, std::vector<RuntimeValue>& args) {
    const auto callee = arg(args, 0);
    if (callee.kind == RuntimeValue::Kind::Function && in.functionAt(callee.raw)) {
      HostCallResult res;
      res.guestCallee = callee.raw;
      res.guestArgs.assign(args.begin() + 1, args.end());
      return res;
    }
    return value(RuntimeValue::integer(0, 32));
  });
  return r;
}

}  // namespace irdb
