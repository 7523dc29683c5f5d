#pragma once

// Little-endian binary containers shared by episode, checkpoint and dot
// pattern files: 4 magic bytes, u16 version, u64 payload length, payload,
// trailing CRC-32 of everything before it.

#include <array>
#include <cstdint>
#include <filesystem>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace pcsg::binio {

enum class FormatErrorKind { kIo, kBadMagic, kVersionMismatch, kChecksum, kTruncated, kMalformed };

std::string_view to_string(FormatErrorKind k);

class FormatError : public std::runtime_error {
 public:
  FormatError(FormatErrorKind kind, const std::string& what)
      : std::runtime_error(std::string(to_string(kind)) + ": " + what), kind_(kind) {}
  FormatErrorKind kind() const { return kind_; }

 private:
  FormatErrorKind kind_;
};

using Magic = std::array<char, 4>;

class Writer {
 public:
  void u8(std::uint8_t v) { buf_.push_back(v); }
  void u16(std::uint16_t v);
  void u32(std::uint32_t v);
  void u64(std::uint64_t v);
  void f64(double v);
  void f64s(std::span<const double> v);
  void bytes(std::span<const std::uint8_t> v);
  void str(std::string_view s);  // u32 length + bytes

  std::size_t size() const { return buf_.size(); }
  const std::vector<std::uint8_t>& buffer() const { return buf_; }

 private:
  std::vector<std::uint8_t> buf_;
};

class Reader {
 public:
  explicit Reader(std::span<const std::uint8_t> data) : data_(data) {}

  std::uint8_t u8();
  std::uint16_t u16();
  std::uint32_t u32();
  std::uint64_t u64();
  double f64();
  void f64s(std::span<double> out);
  void bytes(std::span<std::uint8_t> out);
  std::string str();

  std::size_t remaining() const { return data_.size() - pos_; }
  bool at_end() const { return pos_ == data_.size(); }
  /// A sub-reader over the next n bytes; throws kTruncated if unavailable.
  Reader sub(std::size_t n);

 private:
  std::span<const std::uint8_t> take(std::size_t n);

  std::span<const std::uint8_t> data_;
  std::size_t pos_ = 0;
};

std::uint32_t crc32(std::span<const std::uint8_t> data);

/// Writes magic + version + payload + CRC.
void write_container(const std::filesystem::path& path, Magic magic, std::uint16_t version,
                     const Writer& payload);

/// Loads and validates a container, returning its payload bytes.
std::vector<std::uint8_t> read_container(const std::filesystem::path& path, Magic magic,
                                         std::uint16_t version);

/// Same validation over an in-memory image of a file.
std::vector<std::uint8_t> open_container(std::span<const std::uint8_t> file, Magic magic,
                                         std::uint16_t version);

}  // namespace pcsg::binio
