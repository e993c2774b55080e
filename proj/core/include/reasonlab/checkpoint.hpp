#pragma once

#include <filesystem>
#include <string>

#include "reasonlab/policy.hpp"

namespace reasonlab {

inline constexpr int kCheckpointVersion = 1;

// Text header (version, vocabulary, shape, stage markers, array names and
// shapes) followed by every array as little-endian float64 in header order.
std::string serialize_checkpoint(const PolicyParameters& params);
// Throws kCorruptCheckpoint.
PolicyParameters deserialize_checkpoint(const std::string& bytes);

// Writes to a temporary sibling and renames it into place.
void save_checkpoint(const std::filesystem::path& path, const PolicyParameters& params);
// Throws kIo, kCorruptCheckpoint.
PolicyParameters load_checkpoint(const std::filesystem::path& path);
// As above, and throws kShapeMismatch unless vocabulary and shape match.
PolicyParameters load_checkpoint(const std::filesystem::path& path, const Vocabulary& vocab, const PolicyShape& shape);

// Atomic whole-file write shared by every artifact writer.
void write_file_atomic(const std::filesystem::path& path, const std::string& bytes);
std::string read_file(const std::filesystem::path& path);

}  // namespace reasonlab
