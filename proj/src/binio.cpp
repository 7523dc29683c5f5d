#include "pcsg/binio.hpp"

#include <zlib.h>

#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>

namespace pcsg::binio {

static_assert(std::endian::native == std::endian::little, "binary containers assume a little-endian host");

std::string_view to_string(FormatErrorKind k) {
  switch (k) {
    case FormatErrorKind::kIo: return "io error";
    case FormatErrorKind::kBadMagic: return "bad magic";
    case FormatErrorKind::kVersionMismatch: return "version mismatch";
    case FormatErrorKind::kChecksum: return "checksum mismatch";
    case FormatErrorKind::kTruncated: return "truncated file";
    case FormatErrorKind::kMalformed: return "malformed record";
  }
  return "unknown";
}

namespace {
template <class T>
void put(std::vector<std::uint8_t>& buf, T v) {
  std::uint8_t raw[sizeof(T)];
  std::memcpy(raw, &v, sizeof(T));
  buf.insert(buf.end(), raw, raw + sizeof(T));
}

template <class T>
T get(std::span<const std::uint8_t> bytes) {
  T v;
  std::memcpy(&v, bytes.data(), sizeof(T));
  return v;
}
}  // namespace

void Writer::u16(std::uint16_t v) { put(buf_, v); }
void Writer::u32(std::uint32_t v) { put(buf_, v); }
void Writer::u64(std::uint64_t v) { put(buf_, v); }
void Writer::f64(double v) { put(buf_, v); }

void Writer::f64s(std::span<const double> v) {
  const auto* p = reinterpret_cast<const std::uint8_t*>(v.data());
  buf_.insert(buf_.end(), p, p + v.size_bytes());
}

void Writer::bytes(std::span<const std::uint8_t> v) { buf_.insert(buf_.end(), v.begin(), v.end()); }

void Writer::str(std::string_view s) {
  u32(static_cast<std::uint32_t>(s.size()));
  buf_.insert(buf_.end(), s.begin(), s.end());
}

std::span<const std::uint8_t> Reader::take(std::size_t n) {
  if (remaining() < n) {
    throw FormatError(FormatErrorKind::kTruncated,
                      "need " + std::to_string(n) + " bytes, " + std::to_string(remaining()) + " left");
  }
  auto s = data_.subspan(pos_, n);
  pos_ += n;
  return s;
}

std::uint8_t Reader::u8() { return take(1)[0]; }
std::uint16_t Reader::u16() { return get<std::uint16_t>(take(2)); }
std::uint32_t Reader::u32() { return get<std::uint32_t>(take(4)); }
std::uint64_t Reader::u64() { return get<std::uint64_t>(take(8)); }
double Reader::f64() { return get<double>(take(8)); }

void Reader::f64s(std::span<double> out) {
  auto s = take(out.size_bytes());
  std::memcpy(out.data(), s.data(), s.size());
}

void Reader::bytes(std::span<std::uint8_t> out) {
  auto s = take(out.size());
  std::memcpy(out.data(), s.data(), s.size());
}

std::string Reader::str() {
  const std::uint32_t n = u32();
  auto s = take(n);
  return std::string(s.begin(), s.end());
}

Reader Reader::sub(std::size_t n) { return Reader(take(n)); }

std::uint32_t crc32(std::span<const std::uint8_t> data) {
  uLong c = ::crc32(0L, Z_NULL, 0);
  // zlib takes uInt lengths; feed in chunks.
  std::size_t off = 0;
  while (off < data.size()) {
    const std::size_t n = std::min<std::size_t>(data.size() - off, 1u << 30);
    c = ::crc32(c, data.data() + off, static_cast<uInt>(n));
    off += n;
  }
  return static_cast<std::uint32_t>(c);
}

void write_container(const std::filesystem::path& path, Magic magic, std::uint16_t version,
                     const Writer& payload) {
  Writer head;
  for (char ch : magic) head.u8(static_cast<std::uint8_t>(ch));
  head.u16(version);
  head.u64(payload.size());
  std::vector<std::uint8_t> all = head.buffer();
  all.insert(all.end(), payload.buffer().begin(), payload.buffer().end());
  Writer tail;
  tail.u32(crc32(all));
  all.insert(all.end(), tail.buffer().begin(), tail.buffer().end());

  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw FormatError(FormatErrorKind::kIo, "cannot open " + path.string() + " for writing");
  out.write(reinterpret_cast<const char*>(all.data()), static_cast<std::streamsize>(all.size()));
  if (!out) throw FormatError(FormatErrorKind::kIo, "write failed for " + path.string());
}

std::vector<std::uint8_t> open_container(std::span<const std::uint8_t> file, Magic magic,
                                         std::uint16_t version) {
  if (file.size() < 4) throw FormatError(FormatErrorKind::kTruncated, "file shorter than magic");
  if (std::memcmp(file.data(), magic.data(), 4) != 0) {
    throw FormatError(FormatErrorKind::kBadMagic, "expected '" + std::string(magic.begin(), magic.end()) + "'");
  }
  if (file.size() < 6) throw FormatError(FormatErrorKind::kTruncated, "file shorter than header");
  const auto v = get<std::uint16_t>(file.subspan(4, 2));
  if (v != version) {
    throw FormatError(FormatErrorKind::kVersionMismatch,
                      "file version " + std::to_string(v) + ", reader version " + std::to_string(version));
  }
  constexpr std::size_t kHeader = 14;
  if (file.size() < kHeader) throw FormatError(FormatErrorKind::kTruncated, "file shorter than header");
  const auto declared = get<std::uint64_t>(file.subspan(6, 8));
  if (file.size() - kHeader < declared || file.size() - kHeader - declared < 4) {
    throw FormatError(FormatErrorKind::kTruncated, "payload declares " + std::to_string(declared) +
                                                       " bytes, file holds " + std::to_string(file.size()));
  }
  if (file.size() != kHeader + declared + 4) {
    throw FormatError(FormatErrorKind::kMalformed, "trailing bytes after checksum");
  }
  const auto body = file.first(file.size() - 4);
  const auto stored = get<std::uint32_t>(file.last(4));
  if (crc32(body) != stored) throw FormatError(FormatErrorKind::kChecksum, "CRC-32 does not match contents");
  return {body.begin() + kHeader, body.end()};
}

std::vector<std::uint8_t> read_container(const std::filesystem::path& path, Magic magic,
                                         std::uint16_t version) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError(FormatErrorKind::kIo, "cannot open " + path.string());
  std::vector<std::uint8_t> file((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return open_container(file, magic, version);
}

}  // namespace pcsg::binio
