#pragma once

#include <cstdint>
#include <memory>
#include <stdexcept>
#include <string>
#include <vector>

#include "harness/session.hpp"
#include "json.hpp"
#include "runner/config.hpp"

namespace drift::runner {

inline constexpr std::uint32_t kCheckpointVersion = 1;

class CheckpointVersionError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class CheckpointCorruptError : public std::runtime_error {
 public:
  CheckpointCorruptError(std::string field, const std::string& what)
      : std::runtime_error("corrupt checkpoint: " + field + ": " + what), field_(std::move(field)) {}
  const std::string& field() const { return field_; }

 private:
  std::string field_;
};

enum class DType : std::uint8_t { kF32 = 0, kF64 = 1 };

struct Entry {
  std::string name;
  DType dtype = DType::kF64;
  std::vector<std::uint64_t> shape;
  std::vector<std::uint8_t> bytes;  // little-endian payload

  std::uint64_t count() const;
};

// Named-array container:
//   "DRFT" | u32 version | u64 config hash | u64 payload hash | u32 len + config JSON
//   | u32 entry count | per entry: u16 len + name, u8 dtype, u8 ndim, u64 dims, u64 offset, u64 nbytes
//   | payload
// All integers little-endian; entries are stored back to back in manifest order.
struct ArchiveFile {
  std::uint32_t version = kCheckpointVersion;
  std::string config;
  std::vector<Entry> entries;

  std::vector<std::uint8_t> serialize() const;
  // Throws CheckpointVersionError / CheckpointCorruptError.
  static ArchiveFile parse(const std::vector<std::uint8_t>& bytes);

  const Entry* find(const std::string& name) const;
};

std::vector<std::uint8_t> read_file(const std::string& path);
void write_file(const std::string& path, const std::vector<std::uint8_t>& bytes);

struct LoadedSession {
  RunConfig config;
  std::unique_ptr<harness::DaggerSession> session;
};

ArchiveFile snapshot_session(const RunConfig& cfg, const harness::DaggerSession& session);
// Rebuilds a session; the result is only returned once fully consistent.
LoadedSession restore_session(const ArchiveFile& archive);

void save_checkpoint(const std::string& path, const RunConfig& cfg, const harness::DaggerSession& session);
LoadedSession load_checkpoint(const std::string& path);

// Header, manifest and a progress summary, without building a session.
nlohmann::json inspect_checkpoint(const std::string& path);

}  // namespace drift::runner
