#include "reasonlab/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <optional>
#include <sstream>

#include "reasonlab/error.hpp"

namespace reasonlab {
namespace {

constexpr const char* kMagic = "reasonlab-checkpoint";
constexpr const char* kHeaderEnd = "end";

[[noreturn]] void corrupt(const std::string& why) { throw Error(ErrorKind::kCorruptCheckpoint, why); }

void put_le(std::string& out, double v) {
  auto bits = std::bit_cast<std::uint64_t>(v);
  for (int i = 0; i < 8; ++i) out.push_back(static_cast<char>((bits >> (8 * i)) & 0xff));
}

double get_le(const char* p) {
  std::uint64_t bits = 0;
  for (int i = 0; i < 8; ++i) bits |= static_cast<std::uint64_t>(static_cast<unsigned char>(p[i])) << (8 * i);
  return std::bit_cast<double>(bits);
}

}  // namespace

std::string serialize_checkpoint(const PolicyParameters& params) {
  std::ostringstream h;
  const auto& vocab = params.vocabulary();
  const auto& shape = params.shape();
  h << kMagic << ' ' << kCheckpointVersion << '\n';
  h << "vocab " << vocab.size();
  for (std::size_t i = 0; i < vocab.size(); ++i) h << ' ' << vocab.symbol(static_cast<TokenId>(i));
  h << '\n';
  h << "shape " << shape.d_model << ' ' << shape.n_heads << ' ' << shape.d_ff << ' ' << shape.n_layers << ' '
    << shape.max_positions << '\n';
  h << "stages " << params.stages().size();
  for (const auto& s : params.stages()) h << ' ' << s;
  h << '\n';
  const auto& specs = params.values().specs();
  h << "arrays " << specs.size() << '\n';
  for (const auto& spec : specs) {
    h << spec.name << ' ' << spec.shape.size();
    for (auto d : spec.shape) h << ' ' << d;
    h << '\n';
  }
  h << kHeaderEnd << '\n';
  std::string out = h.str();
  out.reserve(out.size() + 8 * params.values().size());
  for (double v : params.values().flat()) put_le(out, v);
  return out;
}

PolicyParameters deserialize_checkpoint(const std::string& bytes) {
  const std::string end_marker = std::string("\n") + kHeaderEnd + "\n";
  const auto end_pos = bytes.find(end_marker);
  if (end_pos == std::string::npos) corrupt("checkpoint header is incomplete");
  const std::size_t data_offset = end_pos + end_marker.size();
  std::istringstream h(bytes.substr(0, end_pos + 1));

  std::string word;
  int version = 0;
  if (!(h >> word >> version) || word != kMagic) corrupt("not a reasonlab checkpoint");
  if (version != kCheckpointVersion) corrupt("unsupported checkpoint version " + std::to_string(version));

  std::size_t n = 0;
  if (!(h >> word >> n) || word != "vocab" || n == 0) corrupt("bad vocabulary line");
  std::vector<std::string> symbols(n);
  for (auto& s : symbols) {
    if (!(h >> s)) corrupt("bad vocabulary line");
  }
  PolicyShape shape;
  if (!(h >> word >> shape.d_model >> shape.n_heads >> shape.d_ff >> shape.n_layers >> shape.max_positions) ||
      word != "shape") {
    corrupt("bad shape line");
  }
  std::vector<std::string> stages;
  if (!(h >> word >> n) || word != "stages") corrupt("bad stages line");
  stages.resize(n);
  for (auto& s : stages) {
    if (!(h >> s)) corrupt("bad stages line");
  }

  std::optional<PolicyParameters> params;
  try {
    params.emplace(Vocabulary(symbols), shape);
  } catch (const Error& e) {
    corrupt(std::string("inconsistent header: ") + e.what());
  }
  const auto& specs = params->values().specs();
  if (!(h >> word >> n) || word != "arrays" || n != specs.size()) corrupt("array table does not match the shape");
  for (const auto& spec : specs) {
    std::string name;
    std::size_t rank = 0;
    if (!(h >> name >> rank) || name != spec.name || rank != spec.shape.size()) {
      corrupt("array table does not match the shape at " + spec.name);
    }
    for (auto d : spec.shape) {
      std::size_t got = 0;
      if (!(h >> got) || got != d) corrupt("array " + spec.name + " has the wrong dimensions");
    }
  }

  const std::size_t count = params->values().size();
  if (bytes.size() != data_offset + 8 * count) {
    corrupt("expected " + std::to_string(8 * count) + " data bytes, found " +
            std::to_string(bytes.size() - data_offset));
  }
  auto flat = params->values().flat();
  for (std::size_t i = 0; i < count; ++i) flat[i] = get_le(bytes.data() + data_offset + 8 * i);
  if (!params->values().all_finite()) corrupt("checkpoint holds non-finite values");
  params->stages() = std::move(stages);
  return std::move(*params);
}

void write_file_atomic(const std::filesystem::path& path, const std::string& bytes) {
  auto tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw Error(ErrorKind::kIo, "cannot write " + tmp.string());
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw Error(ErrorKind::kIo, "short write to " + tmp.string());
  }
  std::error_code ec;
  std::filesystem::rename(tmp, path, ec);
  if (ec) throw Error(ErrorKind::kIo, "cannot rename into " + path.string() + ": " + ec.message());
}

std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorKind::kIo, "cannot read " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void save_checkpoint(const std::filesystem::path& path, const PolicyParameters& params) {
  write_file_atomic(path, serialize_checkpoint(params));
}

PolicyParameters load_checkpoint(const std::filesystem::path& path) { return deserialize_checkpoint(read_file(path)); }

PolicyParameters load_checkpoint(const std::filesystem::path& path, const Vocabulary& vocab,
                                 const PolicyShape& shape) {
  PolicyParameters p = load_checkpoint(path);
  if (!(p.vocabulary() == vocab)) throw Error(ErrorKind::kShapeMismatch, "checkpoint vocabulary differs");
  if (!(p.shape() == shape)) throw Error(ErrorKind::kShapeMismatch, "checkpoint shape differs");
  return p;
}

}  // namespace reasonlab
