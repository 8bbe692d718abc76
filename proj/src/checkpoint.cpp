#include "path_engine/checkpoint.hpp"

#include <algorithm>
#include <bit>
#include <cstring>
#include <fstream>

#include "path_engine/errors.hpp"

namespace path_engine::inline PATH_ENGINE_NS {

namespace {

constexpr char kMagic[8] = {'P', 'A', 'T', 'H', 'C', 'K', 'P', 'T'};
constexpr std::uint32_t kVersion = 1;

class Writer {
 public:
  explicit Writer(std::ostream& os) : os_(os) {}

  template <typename T>
  void uint(T v) {
    unsigned char buf[sizeof(T)];
    for (std::size_t i = 0; i < sizeof(T); ++i) buf[i] = static_cast<unsigned char>((static_cast<std::uint64_t>(v) >> (8 * i)) & 0xffu);
    os_.write(reinterpret_cast<const char*>(buf), sizeof(T));
  }
  void f32(float v) { uint(std::bit_cast<std::uint32_t>(v)); }
  void str(const std::string& s) {
    uint(static_cast<std::uint32_t>(s.size()));
    os_.write(s.data(), static_cast<std::streamsize>(s.size()));
  }
  void values(const Tensor& t) {
    for (real v : t.data()) f32(static_cast<float>(v));
  }

 private:
  std::ostream& os_;
};

class Reader {
 public:
  Reader(std::istream& is, std::string path) : is_(is), path_(std::move(path)) {}

  template <typename T>
  T uint() {
    unsigned char buf[sizeof(T)];
    bytes(reinterpret_cast<char*>(buf), sizeof(T));
    std::uint64_t v = 0;
    for (std::size_t i = 0; i < sizeof(T); ++i) v |= static_cast<std::uint64_t>(buf[i]) << (8 * i);
    return static_cast<T>(v);
  }
  float f32() { return std::bit_cast<float>(uint<std::uint32_t>()); }
  std::string str(std::uint64_t limit = 1u << 20) {
    const auto n = uint<std::uint32_t>();
    if (n > limit) fail("string length " + std::to_string(n));
    std::string s(n, '\0');
    bytes(s.data(), n);
    return s;
  }
  Tensor values(Shape shape) {
    std::int64_t n = 1;
    for (auto d : shape) {
      if (d < 0 || d > (std::int64_t{1} << 32)) fail("dimension " + std::to_string(d));
      n *= d;
    }
    if (n > (std::int64_t{1} << 31)) fail("entry too large");
    Tensor t(std::move(shape));
    for (std::int64_t i = 0; i < n; ++i) t[i] = static_cast<real>(f32());
    return t;
  }
  void bytes(char* out, std::size_t n) {
    is_.read(out, static_cast<std::streamsize>(n));
    if (static_cast<std::size_t>(is_.gcount()) != n) fail("truncated file");
  }
  [[noreturn]] void fail(const std::string& what) const {
    throw CheckpointError("corrupt checkpoint " + path_ + ": " + what);
  }

 private:
  std::istream& is_;
  std::string path_;
};

}  // namespace

void merge_into(Checkpoint& ckpt, const ParamStore& store) {
  for (const auto* p : store.parameters()) ckpt.params.try_emplace(p->name, p->var.value());
  for (const auto& [name, state] : store.batch_norm_states()) ckpt.batch_norms.try_emplace(name, state);
}

Checkpoint snapshot(const ParamStore& store) {
  Checkpoint c;
  merge_into(c, store);
  return c;
}

std::vector<std::string> restore(ParamStore& store, const Checkpoint& ckpt) {
  std::vector<std::string> missing;
  for (auto* p : store.parameters()) {
    auto it = ckpt.params.find(p->name);
    if (it == ckpt.params.end()) {
      missing.push_back(p->name);
      continue;
    }
    if (it->second.shape() != p->var.shape())
      throw CheckpointError("checkpoint entry '" + p->name + "' has shape " + shape_str(it->second.shape()) +
                            ", model expects " + shape_str(p->var.shape()));
    p->var.mutable_value() = it->second;
  }
  for (auto& [name, state] : store.batch_norm_states()) {
    auto it = ckpt.batch_norms.find(name);
    if (it == ckpt.batch_norms.end()) {
      missing.push_back(name);
      continue;
    }
    if (it->second.running_mean.shape() != state.running_mean.shape())
      throw CheckpointError("batch-norm state '" + name + "' has the wrong channel count");
    state = it->second;
  }
  return missing;
}

std::vector<std::string> diff_names(const Checkpoint& a, const Checkpoint& b) {
  std::vector<std::string> out;
  for (const auto& [name, t] : a.params) {
    auto it = b.params.find(name);
    if (it == b.params.end() || !bitwise_equal(t, it->second)) out.push_back(name);
  }
  for (const auto& [name, t] : b.params)
    if (!a.params.count(name)) out.push_back(name);
  std::sort(out.begin(), out.end());
  return out;
}

void save_checkpoint(const Checkpoint& ckpt, const std::filesystem::path& path) {
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw CheckpointError("cannot write checkpoint " + path.string());
  Writer w(os);
  os.write(kMagic, sizeof(kMagic));
  w.uint(kVersion);
  w.uint(static_cast<std::uint64_t>(ckpt.metadata.size()));
  os.write(ckpt.metadata.data(), static_cast<std::streamsize>(ckpt.metadata.size()));
  w.uint(static_cast<std::uint64_t>(ckpt.params.size()));
  for (const auto& [name, t] : ckpt.params) {
    w.str(name);
    w.uint(static_cast<std::uint32_t>(t.ndim()));
    for (auto d : t.shape()) w.uint(static_cast<std::uint64_t>(d));
    w.values(t);
  }
  w.uint(static_cast<std::uint64_t>(ckpt.batch_norms.size()));
  for (const auto& [name, s] : ckpt.batch_norms) {
    w.str(name);
    w.uint(static_cast<std::uint64_t>(s.running_mean.numel()));
    w.values(s.running_mean);
    w.values(s.running_var);
    w.f32(static_cast<float>(s.momentum));
    w.f32(static_cast<float>(s.eps));
  }
  if (!os) throw CheckpointError("failed writing checkpoint " + path.string());
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw CheckpointError("cannot open checkpoint " + path.string());
  Reader r(is, path.string());
  char magic[8];
  r.bytes(magic, sizeof(magic));
  if (std::memcmp(magic, kMagic, sizeof(kMagic)) != 0) r.fail("bad magic");
  if (r.uint<std::uint32_t>() != kVersion) r.fail("unsupported version");
  Checkpoint c;
  const auto meta = r.uint<std::uint64_t>();
  if (meta > (1u << 26)) r.fail("metadata size");
  c.metadata.assign(meta, '\0');
  r.bytes(c.metadata.data(), meta);

  const auto n = r.uint<std::uint64_t>();
  if (n > (1u << 24)) r.fail("entry count");
  for (std::uint64_t i = 0; i < n; ++i) {
    auto name = r.str();
    const auto ndim = r.uint<std::uint32_t>();
    if (ndim > 8) r.fail("rank of '" + name + "'");
    Shape shape(ndim);
    for (auto& d : shape) d = static_cast<std::int64_t>(r.uint<std::uint64_t>());
    c.params.emplace(std::move(name), r.values(std::move(shape)));
  }
  const auto nb = r.uint<std::uint64_t>();
  if (nb > (1u << 24)) r.fail("batch-norm count");
  for (std::uint64_t i = 0; i < nb; ++i) {
    auto name = r.str();
    const auto ch = static_cast<std::int64_t>(r.uint<std::uint64_t>());
    ops::BatchNormState s;
    s.running_mean = r.values({ch});
    s.running_var = r.values({ch});
    s.momentum = static_cast<real>(r.f32());
    s.eps = static_cast<real>(r.f32());
    c.batch_norms.emplace(std::move(name), std::move(s));
  }
  char extra;
  if (is.read(&extra, 1); is.gcount() != 0) r.fail("trailing bytes");
  return c;
}

}  // namespace path_engine
