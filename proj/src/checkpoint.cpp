#include "spectra/checkpoint.hpp"

#include "spectra/matrix_io.hpp"

#include <cstring>
#include <fstream>
#include <sstream>
#include <stdexcept>

namespace spectra {

namespace {

constexpr char kMagic[4] = {'S', 'P', 'C', 'K'};

void write_bytes(std::ostream& out, const void* data, std::size_t size) {
  out.write(static_cast<const char*>(data), static_cast<std::streamsize>(size));
  if (!out) throw std::runtime_error("checkpoint: write failed");
}

void read_bytes(std::istream& in, void* data, std::size_t size, std::uint64_t& offset) {
  in.read(static_cast<char*>(data), static_cast<std::streamsize>(size));
  const auto got = static_cast<std::uint64_t>(in.gcount());
  if (got != size) {
    std::ostringstream msg;
    msg << "checkpoint: truncated file at byte offset " << (offset + got);
    throw std::runtime_error(msg.str());
  }
  offset += got;
}

}  // namespace

const Matrix& Checkpoint::matrix(const std::string& name) const {
  for (const auto& [n, m] : matrices) {
    if (n == name) return m;
  }
  throw std::runtime_error("checkpoint: no matrix named '" + name + "'");
}

bool Checkpoint::has_matrix(const std::string& name) const {
  for (const auto& [n, m] : matrices) {
    if (n == name) return true;
  }
  return false;
}

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("checkpoint: cannot open for writing: " + path.string());
  write_bytes(out, kMagic, 4);
  const std::uint32_t version = kCheckpointVersion;
  write_bytes(out, &version, sizeof(version));
  const std::string meta = ckpt.meta.dump();
  const std::uint64_t meta_len = meta.size();
  write_bytes(out, &meta_len, sizeof(meta_len));
  write_bytes(out, meta.data(), meta.size());
  const std::uint32_t count = static_cast<std::uint32_t>(ckpt.matrices.size());
  write_bytes(out, &count, sizeof(count));
  for (const auto& [name, m] : ckpt.matrices) {
    const std::uint32_t name_len = static_cast<std::uint32_t>(name.size());
    write_bytes(out, &name_len, sizeof(name_len));
    write_bytes(out, name.data(), name.size());
    write_spcm(out, m);
  }
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("checkpoint: cannot open for reading: " + path.string());
  std::uint64_t offset = 0;
  char magic[4];
  read_bytes(in, magic, 4, offset);
  if (std::memcmp(magic, kMagic, 4) != 0) {
    throw std::runtime_error("checkpoint: bad magic, not an SPCK container");
  }
  std::uint32_t version = 0;
  read_bytes(in, &version, sizeof(version), offset);
  if (version != kCheckpointVersion) {
    std::ostringstream msg;
    msg << "checkpoint: unsupported version " << version;
    throw std::runtime_error(msg.str());
  }
  std::uint64_t meta_len = 0;
  read_bytes(in, &meta_len, sizeof(meta_len), offset);
  if (meta_len > (1ull << 30)) {
    throw std::runtime_error("checkpoint: implausible metadata length");
  }
  std::string meta(meta_len, '\0');
  read_bytes(in, meta.data(), meta.size(), offset);

  Checkpoint ckpt;
  ckpt.meta = nlohmann::json::parse(meta, nullptr, /*allow_exceptions=*/false);
  if (ckpt.meta.is_discarded()) {
    throw std::runtime_error("checkpoint: malformed metadata JSON");
  }
  std::uint32_t count = 0;
  read_bytes(in, &count, sizeof(count), offset);
  for (std::uint32_t i = 0; i < count; ++i) {
    std::uint32_t name_len = 0;
    read_bytes(in, &name_len, sizeof(name_len), offset);
    if (name_len > 4096) throw std::runtime_error("checkpoint: implausible matrix name");
    std::string name(name_len, '\0');
    read_bytes(in, name.data(), name.size(), offset);
    ckpt.matrices.emplace_back(std::move(name), read_spcm(in));
  }
  return ckpt;
}

}  // namespace spectra
