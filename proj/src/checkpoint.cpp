#include "rada/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <map>
#include <sstream>
#include <stdexcept>

namespace rada {

namespace {

constexpr char kMagic[8] = {'R', 'A', 'D', 'A', 'C', 'K', 'P', 'T'};
constexpr std::uint64_t kMaxCount = std::uint64_t{1} << 32;

enum Tag : std::uint8_t { TensorF64 = 1, Bytes = 2, U64 = 3, F64Array = 4 };

class Writer {
 public:
  explicit Writer(std::ostream& os) : os_(os) {}

  void raw(const void* p, std::size_t n) { os_.write(static_cast<const char*>(p), static_cast<std::streamsize>(n)); }
  template <class T>
  void uint(T v) {
    unsigned char b[sizeof(T)];
    for (std::size_t i = 0; i < sizeof(T); ++i) b[i] = static_cast<unsigned char>(v >> (8 * i));
    raw(b, sizeof b);
  }
  void f64(double v) { uint(std::bit_cast<std::uint64_t>(v)); }
  void header(Tag tag, const std::string& name) {
    uint<std::uint8_t>(tag);
    uint(static_cast<std::uint32_t>(name.size()));
    raw(name.data(), name.size());
  }
  void tensor(const std::string& name, const Tensor& t) {
    header(TensorF64, name);
    uint(static_cast<std::uint32_t>(t.rank()));
    for (auto d : t.shape()) uint(static_cast<std::uint64_t>(d));
    for (double v : t.raw()) f64(v);
  }
  void bytes(const std::string& name, std::string_view s) {
    header(Bytes, name);
    uint(static_cast<std::uint64_t>(s.size()));
    raw(s.data(), s.size());
  }
  void u64(const std::string& name, std::uint64_t v) {
    header(U64, name);
    uint(v);
  }
  void f64s(const std::string& name, const std::vector<double>& v) {
    header(F64Array, name);
    uint(static_cast<std::uint64_t>(v.size()));
    for (double x : v) f64(x);
  }

 private:
  std::ostream& os_;
};

struct Entry {
  Tag tag{};
  Tensor tensor;
  std::string bytes;
  std::uint64_t u64 = 0;
  std::vector<double> f64s;
};

class Reader {
 public:
  explicit Reader(std::istream& is) : is_(is) {}

  void raw(void* p, std::size_t n) {
    is_.read(static_cast<char*>(p), static_cast<std::streamsize>(n));
    if (static_cast<std::size_t>(is_.gcount()) != n) throw std::runtime_error("checkpoint: truncated file");
  }
  template <class T>
  T uint() {
    unsigned char b[sizeof(T)];
    raw(b, sizeof b);
    T v = 0;
    for (std::size_t i = 0; i < sizeof(T); ++i) v |= static_cast<T>(static_cast<T>(b[i]) << (8 * i));
    return v;
  }
  double f64() { return std::bit_cast<double>(uint<std::uint64_t>()); }
  std::uint64_t count() {
    const auto n = uint<std::uint64_t>();
    if (n > kMaxCount) throw std::runtime_error("checkpoint: implausible length " + std::to_string(n));
    return n;
  }
  std::string string(std::uint64_t n) {
    std::string s(n, '\0');
    if (n) raw(s.data(), n);
    return s;
  }

  std::pair<std::string, Entry> entry() {
    Entry e;
    const auto tag = uint<std::uint8_t>();
    std::string name = string(uint<std::uint32_t>());
    switch (tag) {
      case TensorF64: {
        const auto rank = uint<std::uint32_t>();
        if (rank == 0 || rank > 2) throw std::runtime_error("checkpoint: " + name + " has rank " + std::to_string(rank));
        Shape shape;
        std::uint64_t numel = 1;
        for (std::uint32_t i = 0; i < rank; ++i) {
          const auto d = count();
          if (d == 0) throw std::runtime_error("checkpoint: " + name + " has a zero dimension");
          shape.push_back(static_cast<std::size_t>(d));
          numel *= d;
          if (numel > kMaxCount) throw std::runtime_error("checkpoint: " + name + " is implausibly large");
        }
        std::vector<double> data(numel);
        for (auto& v : data) v = f64();
        e.tensor = Tensor(std::move(shape), std::move(data));
        break;
      }
      case Bytes: e.bytes = string(count()); break;
      case U64: e.u64 = uint<std::uint64_t>(); break;
      case F64Array: {
        e.f64s.resize(count());
        for (auto& v : e.f64s) v = f64();
        break;
      }
      default: throw std::runtime_error("checkpoint: unknown entry tag " + std::to_string(tag));
    }
    e.tag = static_cast<Tag>(tag);
    return {std::move(name), std::move(e)};
  }

 private:
  std::istream& is_;
};

const Entry& take(const std::map<std::string, Entry>& m, const std::string& name, Tag tag) {
  auto it = m.find(name);
  if (it == m.end()) throw std::runtime_error("checkpoint: missing entry " + name);
  if (it->second.tag != tag) throw std::runtime_error("checkpoint: entry " + name + " has the wrong type");
  return it->second;
}

}  // namespace

void write_checkpoint(std::ostream& os, const Checkpoint& c) {
  if (c.names.size() != c.params.size() || c.velocities.size() != c.params.size()) {
    throw std::invalid_argument("checkpoint: names, params and velocities differ in count");
  }
  for (std::size_t i = 0; i < c.params.size(); ++i) {
    if (c.params[i].shape() != c.velocities[i].shape()) {
      throw std::invalid_argument("checkpoint: velocity shape differs for " + c.names[i]);
    }
  }
  Writer w(os);
  w.raw(kMagic, sizeof kMagic);
  w.uint(c.version);
  w.uint(static_cast<std::uint32_t>(11 + 2 * c.params.size()));
  w.bytes("config", c.config_text);
  w.u64("config_hash", c.config_hash);
  w.u64("epoch", c.epoch);
  for (std::size_t i = 0; i < c.params.size(); ++i) w.tensor("param/" + c.names[i], c.params[i]);
  for (std::size_t i = 0; i < c.params.size(); ++i) w.tensor("velocity/" + c.names[i], c.velocities[i]);
  w.u64("rada/active", c.rada.active ? 1 : 0);
  w.u64("rada/plateau_counter", c.rada.plateau_counter);
  w.f64s("rada/best_entropy", {c.rada.best_entropy});
  w.f64s("rada/entropy_history", c.rada.entropy_history);
  w.bytes("rng/shuffle", c.shuffle_rng);
  w.bytes("rng/mixup", c.mixup_rng);
  w.bytes("relabel/persistent",
          std::string_view(reinterpret_cast<const char*>(c.persistent_relabel.data()),
                           c.persistent_relabel.size()));
  w.bytes("names", [&] {
    std::string s;
    for (const auto& n : c.names) s += n + '\n';
    return s;
  }());
  if (!os) throw std::runtime_error("checkpoint: write failed");
}

Checkpoint read_checkpoint(std::istream& is) {
  Reader r(is);
  char magic[8];
  r.raw(magic, sizeof magic);
  if (std::memcmp(magic, kMagic, sizeof magic) != 0) throw std::runtime_error("checkpoint: bad magic bytes");
  Checkpoint c;
  c.version = r.uint<std::uint32_t>();
  if (c.version != kCheckpointVersion) {
    throw std::runtime_error("checkpoint: version " + std::to_string(c.version) + ", expected " +
                             std::to_string(kCheckpointVersion));
  }
  const auto n = r.uint<std::uint32_t>();
  std::map<std::string, Entry> entries;
  for (std::uint32_t i = 0; i < n; ++i) {
    auto [name, e] = r.entry();
    if (!entries.emplace(name, std::move(e)).second) throw std::runtime_error("checkpoint: duplicate entry " + name);
  }
  if (is.peek() != std::char_traits<char>::eof()) throw std::runtime_error("checkpoint: trailing bytes");

  c.config_text = take(entries, "config", Bytes).bytes;
  c.config_hash = take(entries, "config_hash", U64).u64;
  c.epoch = take(entries, "epoch", U64).u64;
  std::istringstream names(take(entries, "names", Bytes).bytes);
  for (std::string line; std::getline(names, line);) c.names.push_back(line);
  if (n != 11 + 2 * c.names.size()) throw std::runtime_error("checkpoint: entry count does not match parameter list");
  for (const auto& name : c.names) {
    c.params.push_back(take(entries, "param/" + name, TensorF64).tensor);
    c.velocities.push_back(take(entries, "velocity/" + name, TensorF64).tensor);
    if (c.params.back().shape() != c.velocities.back().shape()) {
      throw std::runtime_error("checkpoint: shape of velocity/" + name + " differs from its parameter");
    }
  }
  const auto active = take(entries, "rada/active", U64).u64;
  if (active > 1) throw std::runtime_error("checkpoint: rada/active is not 0 or 1");
  c.rada.active = active == 1;
  c.rada.plateau_counter = take(entries, "rada/plateau_counter", U64).u64;
  const auto& best = take(entries, "rada/best_entropy", F64Array).f64s;
  if (best.size() != 1) throw std::runtime_error("checkpoint: rada/best_entropy must hold one value");
  c.rada.best_entropy = best[0];
  c.rada.entropy_history = take(entries, "rada/entropy_history", F64Array).f64s;
  c.shuffle_rng = take(entries, "rng/shuffle", Bytes).bytes;
  c.mixup_rng = take(entries, "rng/mixup", Bytes).bytes;
  const auto& rel = take(entries, "relabel/persistent", Bytes).bytes;
  c.persistent_relabel.assign(rel.begin(), rel.end());
  return c;
}

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt) {
  const auto tmp = std::filesystem::path(path.string() + ".tmp");
  {
    std::ofstream os(tmp, std::ios::binary | std::ios::trunc);
    if (!os) throw std::runtime_error("cannot write checkpoint " + tmp.string());
    write_checkpoint(os, ckpt);
  }
  std::filesystem::rename(tmp, path);
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw std::runtime_error("cannot open checkpoint " + path.string());
  return read_checkpoint(is);
}

}  // namespace rada
