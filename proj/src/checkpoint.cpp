#include "btsnet/checkpoint.hpp"

#include <cstring>
#include <fstream>
#include <map>

#include "btsnet/errors.hpp"

namespace btsnet {

namespace {

constexpr char kMagic[8] = {'B', 'T', 'S', 'N', 'E', 'T', 'C', 'K'};

enum EntryKind : std::uint8_t { kParameter = 0, kBuffer = 1, kMoment1 = 2, kMoment2 = 3 };

template <typename V>
void put(std::ostream& out, V v) {
  out.write(reinterpret_cast<const char*>(&v), sizeof(V));
}

template <typename V>
V take(std::istream& in, const std::filesystem::path& path) {
  V v;
  in.read(reinterpret_cast<char*>(&v), sizeof(V));
  if (!in) throw PreconditionError("truncated checkpoint " + path.string());
  return v;
}

std::string take_string(std::istream& in, std::size_t n, const std::filesystem::path& path) {
  if (n > (std::size_t(1) << 32)) throw PreconditionError("corrupt checkpoint " + path.string());
  std::string s(n, '\0');
  in.read(s.data(), static_cast<std::streamsize>(n));
  if (!in) throw PreconditionError("truncated checkpoint " + path.string());
  return s;
}

CheckpointInfo read_header(std::istream& in, const std::filesystem::path& path) {
  char magic[8];
  in.read(magic, 8);
  if (!in || std::memcmp(magic, kMagic, 8) != 0) {
    throw PreconditionError(path.string() + " is not a checkpoint");
  }
  CheckpointInfo info;
  info.version = take<std::uint32_t>(in, path);
  if (info.version != kCheckpointVersion) {
    throw PreconditionError("checkpoint " + path.string() + " has format version " +
                            std::to_string(info.version) + ", expected " +
                            std::to_string(kCheckpointVersion));
  }
  info.scalar_bytes = static_cast<int>(take<std::uint32_t>(in, path));
  const auto len = take<std::uint64_t>(in, path);
  info.config = nlohmann::json::parse(take_string(in, len, path));
  info.epoch = take<std::int64_t>(in, path);
  info.adam_step = take<std::int64_t>(in, path);
  return info;
}

struct Entry {
  Shape shape;
  std::streampos offset;
};

}  // namespace

template <typename T>
void save_checkpoint(const std::filesystem::path& path, const Module<T>& model,
                     const Adam<T>* optimizer, const CheckpointInfo& info) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  const auto tmp = path.string() + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary);
    if (!out) throw PreconditionError("cannot write checkpoint " + path.string());
    out.write(kMagic, 8);
    put<std::uint32_t>(out, kCheckpointVersion);
    put<std::uint32_t>(out, sizeof(T));
    const std::string cfg = info.config.dump();
    put<std::uint64_t>(out, cfg.size());
    out.write(cfg.data(), static_cast<std::streamsize>(cfg.size()));
    put<std::int64_t>(out, info.epoch);
    put<std::int64_t>(out, optimizer ? optimizer->step_count() : info.adam_step);

    const auto params = model.named_parameters();
    const auto buffers = model.named_buffers();
    std::uint64_t count = params.size() + buffers.size();
    if (optimizer) count += 2 * optimizer->parameters().size();
    put<std::uint64_t>(out, count);
    auto write_entry = [&](EntryKind kind, const std::string& name, const Tensor<T>& t) {
      put<std::uint8_t>(out, kind);
      put<std::uint32_t>(out, static_cast<std::uint32_t>(name.size()));
      out.write(name.data(), static_cast<std::streamsize>(name.size()));
      const Shape& s = t.shape();
      for (int d : {s.n, s.c, s.h, s.w}) put<std::int32_t>(out, d);
      out.write(reinterpret_cast<const char*>(t.data()),
                static_cast<std::streamsize>(t.size() * sizeof(T)));
    };
    for (const auto& p : params) write_entry(kParameter, p.name, p.var.value());
    for (const auto& b : buffers) write_entry(kBuffer, b.name, b.var.value());
    if (optimizer) {
      auto& opt = const_cast<Adam<T>&>(*optimizer);
      const auto& names = opt.parameters();
      for (std::size_t i = 0; i < names.size(); ++i) {
        write_entry(kMoment1, names[i].name, opt.first_moments()[i]);
        write_entry(kMoment2, names[i].name, opt.second_moments()[i]);
      }
    }
    if (!out) throw PreconditionError("failed writing checkpoint " + path.string());
  }
  std::filesystem::rename(tmp, path);
}

CheckpointInfo read_checkpoint_info(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw PreconditionError("cannot open checkpoint " + path.string());
  return read_header(in, path);
}

template <typename T>
CheckpointInfo load_checkpoint(const std::filesystem::path& path, Module<T>& model,
                               Adam<T>* optimizer) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw PreconditionError("cannot open checkpoint " + path.string());
  CheckpointInfo info = read_header(in, path);
  if (info.scalar_bytes != static_cast<int>(sizeof(T))) {
    throw ConfigError("checkpoint " + path.string() + " stores " +
                      std::to_string(8 * info.scalar_bytes) + "-bit values, model is " +
                      std::to_string(8 * sizeof(T)) + "-bit");
  }
  std::array<std::map<std::string, Entry>, 4> entries;
  const auto count = take<std::uint64_t>(in, path);
  for (std::uint64_t i = 0; i < count; ++i) {
    const auto kind = take<std::uint8_t>(in, path);
    if (kind > kMoment2) throw PreconditionError("corrupt checkpoint " + path.string());
    const auto len = take<std::uint32_t>(in, path);
    const std::string name = take_string(in, len, path);
    Entry e;
    e.shape.n = take<std::int32_t>(in, path);
    e.shape.c = take<std::int32_t>(in, path);
    e.shape.h = take<std::int32_t>(in, path);
    e.shape.w = take<std::int32_t>(in, path);
    if (!e.shape.valid()) throw PreconditionError("corrupt checkpoint " + path.string());
    e.offset = in.tellg();
    in.seekg(static_cast<std::streamoff>(e.shape.numel() * sizeof(T)), std::ios::cur);
    entries[kind][name] = e;
  }

  std::vector<std::string> problems;
  auto restore = [&](EntryKind kind, const std::string& name, Tensor<T>& target,
                     const char* what) {
    auto it = entries[kind].find(name);
    if (it == entries[kind].end()) {
      problems.push_back(std::string("checkpoint lacks ") + what + " '" + name + "'");
      return;
    }
    if (it->second.shape != target.shape()) {
      problems.push_back(std::string(what) + " '" + name + "' has shape " +
                         it->second.shape.str() + " in the checkpoint, model expects " +
                         target.shape().str());
      entries[kind].erase(it);
      return;
    }
    in.clear();
    in.seekg(it->second.offset);
    in.read(reinterpret_cast<char*>(target.data()),
            static_cast<std::streamsize>(target.size() * sizeof(T)));
    if (!in) problems.push_back("truncated data for '" + name + "'");
    entries[kind].erase(it);
  };
  for (auto& p : model.named_parameters()) {
    restore(kParameter, p.name, p.var.mutable_value(), "parameter");
  }
  for (auto& b : model.named_buffers()) {
    restore(kBuffer, b.name, b.var.mutable_value(), "buffer");
  }
  if (optimizer) {
    const auto& names = optimizer->parameters();
    for (std::size_t i = 0; i < names.size(); ++i) {
      restore(kMoment1, names[i].name, optimizer->first_moments()[i], "Adam moment");
      restore(kMoment2, names[i].name, optimizer->second_moments()[i], "Adam moment");
    }
    optimizer->set_step_count(info.adam_step);
  }
  for (int kind : {kParameter, kBuffer}) {
    for (const auto& [name, e] : entries[kind]) {
      problems.push_back("checkpoint entry '" + name + "' has no counterpart in the model");
    }
  }
  if (!problems.empty()) throw ItemizedError(problems);
  return info;
}

template void save_checkpoint(const std::filesystem::path&, const Module<float>&,
                              const Adam<float>*, const CheckpointInfo&);
template void save_checkpoint(const std::filesystem::path&, const Module<double>&,
                              const Adam<double>*, const CheckpointInfo&);
template CheckpointInfo load_checkpoint(const std::filesystem::path&, Module<float>&,
                                        Adam<float>*);
template CheckpointInfo load_checkpoint(const std::filesystem::path&, Module<double>&,
                                        Adam<double>*);

}  // namespace btsnet
