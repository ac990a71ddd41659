#include "synthdet/archive.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>

#include "synthdet/hash.hpp"

namespace synthdet {

namespace {

constexpr char kMagic[8] = {'S', 'Y', 'N', 'T', 'H', 'D', 'E', 'T'};

static_assert(std::endian::native == std::endian::little, "archive I/O assumes a little-endian host");

template <typename T>
void put(std::vector<std::uint8_t>& out, T value) {
  const auto* p = reinterpret_cast<const std::uint8_t*>(&value);
  out.insert(out.end(), p, p + sizeof(T));
}

class Reader {
 public:
  explicit Reader(const std::vector<std::uint8_t>& bytes) : bytes_(bytes) {}

  template <typename T>
  T get() {
    need(sizeof(T));
    T value;
    std::memcpy(&value, bytes_.data() + pos_, sizeof(T));
    pos_ += sizeof(T);
    return value;
  }
  const std::uint8_t* take(std::size_t n) {
    need(n);
    const auto* p = bytes_.data() + pos_;
    pos_ += n;
    return p;
  }
  std::size_t position() const noexcept { return pos_; }

 private:
  void need(std::size_t n) const {
    if (bytes_.size() - pos_ < n) throw CheckpointError(CheckpointError::Kind::corrupt, "checkpoint truncated");
  }
  const std::vector<std::uint8_t>& bytes_;
  std::size_t pos_ = 0;
};

}  // namespace

void TensorArchive::store(const nn::ParameterList& params, const std::string& prefix) {
  for (const auto& p : params) {
    StoredTensor t{p.shape, std::vector<double>(p.size())};
    for (std::size_t i = 0; i < p.size(); ++i) t.values[i] = p.get(i);
    tensors[prefix + p.name] = std::move(t);
  }
}

void TensorArchive::restore(const nn::ParameterList& params, const std::string& prefix) const {
  for (const auto& p : params) {
    const auto it = tensors.find(prefix + p.name);
    if (it == tensors.end())
      throw CheckpointError(CheckpointError::Kind::schema, "checkpoint is missing tensor '" + prefix + p.name + "'");
    if (it->second.shape != p.shape || it->second.values.size() != p.size())
      throw CheckpointError(CheckpointError::Kind::schema, "checkpoint tensor '" + prefix + p.name + "' has the wrong shape");
    for (std::size_t i = 0; i < p.size(); ++i) p.set(i, it->second.values[i]);
  }
}

std::vector<std::uint8_t> serialize_archive(const TensorArchive& archive) {
  nlohmann::json header;
  header["kind"] = archive.kind;
  header["meta"] = archive.meta;
  header["tensors"] = nlohmann::json::array();
  std::uint64_t offset = 0;
  for (const auto& [name, t] : archive.tensors) {
    header["tensors"].push_back({{"name", name}, {"shape", t.shape}, {"offset", offset}, {"count", t.values.size()}});
    offset += t.values.size();
  }
  const std::string header_text = header.dump();

  std::vector<std::uint8_t> out(std::begin(kMagic), std::end(kMagic));
  put<std::uint32_t>(out, TensorArchive::kContainerVersion);
  put<std::uint64_t>(out, header_text.size());
  out.insert(out.end(), header_text.begin(), header_text.end());
  put<std::uint64_t>(out, offset * sizeof(double));
  for (const auto& [name, t] : archive.tensors)
    for (double v : t.values) put<double>(out, v);

  Fnv1a64 digest;
  digest.update(std::as_bytes(std::span(out)));
  put<std::uint64_t>(out, digest.digest());
  return out;
}

TensorArchive parse_archive(const std::vector<std::uint8_t>& bytes) {
  using Kind = CheckpointError::Kind;
  Reader r(bytes);
  if (std::memcmp(r.take(sizeof(kMagic)), kMagic, sizeof(kMagic)) != 0)
    throw CheckpointError(Kind::corrupt, "not a synthdet weights file (bad magic)");
  const auto version = r.get<std::uint32_t>();
  if (version != TensorArchive::kContainerVersion)
    throw CheckpointError(Kind::version_mismatch, "weights container version " + std::to_string(version) +
                                                      " is not supported (expected " +
                                                      std::to_string(TensorArchive::kContainerVersion) +
                                                      "); re-export the file with a matching release");
  if (bytes.size() < sizeof(std::uint64_t)) throw CheckpointError(Kind::corrupt, "checkpoint truncated");
  {
    Fnv1a64 digest;
    digest.update(std::as_bytes(std::span(bytes.data(), bytes.size() - sizeof(std::uint64_t))));
    std::uint64_t stored;
    std::memcpy(&stored, bytes.data() + bytes.size() - sizeof(std::uint64_t), sizeof(stored));
    if (stored != digest.digest()) throw CheckpointError(Kind::corrupt, "checkpoint checksum mismatch (file is corrupt)");
  }

  const auto header_len = r.get<std::uint64_t>();
  const auto* header_ptr = reinterpret_cast<const char*>(r.take(header_len));
  nlohmann::json header;
  try {
    header = nlohmann::json::parse(header_ptr, header_ptr + header_len);
  } catch (const nlohmann::json::exception& e) {
    throw CheckpointError(Kind::corrupt, std::string("checkpoint header is not valid JSON: ") + e.what());
  }
  const auto payload_len = r.get<std::uint64_t>();
  if (payload_len % sizeof(double) != 0) throw CheckpointError(Kind::corrupt, "checkpoint payload misaligned");
  const auto* payload = r.take(payload_len);
  const std::uint64_t count_total = payload_len / sizeof(double);

  TensorArchive archive;
  try {
    archive.kind = header.at("kind").get<std::string>();
    archive.meta = header.at("meta");
    for (const auto& entry : header.at("tensors")) {
      StoredTensor t;
      t.shape = entry.at("shape").get<std::vector<int>>();
      const auto offset = entry.at("offset").get<std::uint64_t>();
      const auto count = entry.at("count").get<std::uint64_t>();
      if (offset + count > count_total) throw CheckpointError(Kind::corrupt, "checkpoint tensor table out of range");
      t.values.resize(count);
      std::memcpy(t.values.data(), payload + offset * sizeof(double), count * sizeof(double));
      archive.tensors.emplace(entry.at("name").get<std::string>(), std::move(t));
    }
  } catch (const nlohmann::json::exception& e) {
    throw CheckpointError(Kind::corrupt, std::string("checkpoint header malformed: ") + e.what());
  }
  return archive;
}

void write_archive(const TensorArchive& archive, const std::filesystem::path& path) {
  const auto bytes = serialize_archive(archive);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw CheckpointError(CheckpointError::Kind::io, "cannot open for writing: " + path.string());
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw CheckpointError(CheckpointError::Kind::io, "write failed: " + path.string());
}

TensorArchive read_archive(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw CheckpointError(CheckpointError::Kind::io, "cannot open weights file: " + path.string());
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return parse_archive(bytes);
}

}  // namespace synthdet
