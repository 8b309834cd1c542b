#include "moelm/container.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <iomanip>
#include <sstream>

#include <openssl/sha.h>

#include "moelm/error.hpp"

namespace moelm {
namespace {

void put_u32(std::string& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

void put_u64(std::string& out, std::uint64_t v) {
  for (int i = 0; i < 8; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

void put_str(std::string& out, const std::string& s) {
  put_u32(out, static_cast<std::uint32_t>(s.size()));
  out += s;
}

class Reader {
 public:
  explicit Reader(const std::string& bytes) : bytes_(bytes) {}

  std::uint32_t u32() {
    need(4);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) {
      v |= static_cast<std::uint32_t>(static_cast<unsigned char>(bytes_[pos_ + i])) << (8 * i);
    }
    pos_ += 4;
    return v;
  }

  std::uint64_t u64() {
    need(8);
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) {
      v |= static_cast<std::uint64_t>(static_cast<unsigned char>(bytes_[pos_ + i])) << (8 * i);
    }
    pos_ += 8;
    return v;
  }

  std::string str() {
    const std::uint32_t n = u32();
    need(n);
    std::string s = bytes_.substr(pos_, n);
    pos_ += n;
    return s;
  }

  std::string raw(std::size_t n) {
    need(n);
    std::string s = bytes_.substr(pos_, n);
    pos_ += n;
    return s;
  }

  bool done() const { return pos_ == bytes_.size(); }

 private:
  void need(std::size_t n) const {
    if (pos_ + n > bytes_.size()) throw ParseError("checkpoint truncated");
  }

  const std::string& bytes_;
  std::size_t pos_ = 0;
};

}  // namespace

void Container::put(const TensorView& v) {
  tensors[v.name] = Tensor{static_cast<std::uint32_t>(v.rows), static_cast<std::uint32_t>(v.cols),
                           std::vector<double>(v.data.begin(), v.data.end())};
}

void Container::put_all(const std::vector<TensorView>& views) {
  for (const auto& v : views) put(v);
}

void Container::get(const TensorView& v) const {
  auto it = tensors.find(v.name);
  if (it == tensors.end()) throw ParseError("checkpoint is missing tensor '" + v.name + "'");
  const Tensor& t = it->second;
  if (t.rows != v.rows || t.cols != v.cols) {
    throw ShapeError("tensor '" + v.name + "' has shape " + std::to_string(t.rows) + "x" +
                     std::to_string(t.cols) + ", expected " + std::to_string(v.rows) + "x" +
                     std::to_string(v.cols));
  }
  std::copy(t.data.begin(), t.data.end(), v.data.begin());
}

void Container::get_all(const std::vector<TensorView>& views) const {
  for (const auto& v : views) get(v);
}

const std::string& Container::meta_at(const std::string& key) const {
  auto it = meta.find(key);
  if (it == meta.end()) throw ParseError("checkpoint is missing metadata '" + key + "'");
  return it->second;
}

const std::vector<std::string>& Container::list_at(const std::string& key) const {
  auto it = lists.find(key);
  if (it == lists.end()) throw ParseError("checkpoint is missing list '" + key + "'");
  return it->second;
}

std::string Container::to_bytes() const {
  std::string out(kMagic, sizeof(kMagic));
  put_u32(out, kVersion);
  put_u32(out, static_cast<std::uint32_t>(meta.size()));
  for (const auto& [k, v] : meta) {
    put_str(out, k);
    put_str(out, v);
  }
  put_u32(out, static_cast<std::uint32_t>(lists.size()));
  for (const auto& [k, items] : lists) {
    put_str(out, k);
    put_u32(out, static_cast<std::uint32_t>(items.size()));
    for (const auto& s : items) put_str(out, s);
  }
  put_u32(out, static_cast<std::uint32_t>(tensors.size()));
  for (const auto& [k, t] : tensors) {
    put_str(out, k);
    put_u32(out, t.rows);
    put_u32(out, t.cols);
    for (double d : t.data) put_u64(out, std::bit_cast<std::uint64_t>(d));
  }
  return out;
}

Container Container::from_bytes(const std::string& bytes) {
  Reader r(bytes);
  if (r.raw(sizeof(kMagic)) != std::string(kMagic, sizeof(kMagic))) {
    throw ParseError("not a MOELM checkpoint (bad magic)");
  }
  const std::uint32_t version = r.u32();
  if (version != kVersion) {
    throw ParseError("unsupported checkpoint version " + std::to_string(version));
  }
  Container c;
  for (std::uint32_t n = r.u32(); n > 0; --n) {
    std::string k = r.str();
    c.meta[k] = r.str();
  }
  for (std::uint32_t n = r.u32(); n > 0; --n) {
    std::string k = r.str();
    std::vector<std::string> items(r.u32());
    for (auto& s : items) s = r.str();
    c.lists[k] = std::move(items);
  }
  for (std::uint32_t n = r.u32(); n > 0; --n) {
    std::string k = r.str();
    Tensor t;
    t.rows = r.u32();
    t.cols = r.u32();
    t.data.resize(static_cast<std::size_t>(t.rows) * t.cols);
    for (double& d : t.data) d = std::bit_cast<double>(r.u64());
    c.tensors[k] = std::move(t);
  }
  if (!r.done()) throw ParseError("trailing bytes after checkpoint");
  return c;
}

void Container::save(const std::filesystem::path& path) const { write_file(path, to_bytes()); }

Container Container::load(const std::filesystem::path& path) {
  return from_bytes(read_file(path));
}

std::string sha256_hex(const std::string& bytes) {
  unsigned char digest[SHA256_DIGEST_LENGTH];
  SHA256(reinterpret_cast<const unsigned char*>(bytes.data()), bytes.size(), digest);
  std::ostringstream os;
  for (unsigned char b : digest) os << std::hex << std::setw(2) << std::setfill('0') << int(b);
  return os.str();
}

std::string file_sha256(const std::filesystem::path& path) { return sha256_hex(read_file(path)); }

std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open " + path.string());
  std::ostringstream os;
  os << in.rdbuf();
  return os.str();
}

void write_file(const std::filesystem::path& path, const std::string& bytes) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error("cannot write " + path.string());
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw Error("write failed for " + path.string());
}

}  // namespace moelm
