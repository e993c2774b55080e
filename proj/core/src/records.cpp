#include "reasonlab/records.hpp"

#include <fstream>

#include <json.hpp>

#include "reasonlab/checkpoint.hpp"
#include "reasonlab/error.hpp"

namespace reasonlab {
namespace {

using nlohmann::json;

const Vocabulary& vocab() { return Vocabulary::standard(); }

json tokens_json(const TokenSequence& tokens) { return vocab().to_symbols(tokens); }

TokenSequence tokens_from(const json& j) { return vocab().from_symbols(j.get<std::vector<std::string>>()); }

json rollout_json(const Rollout& r) {
  json j;
  j["id"] = r.id;
  j["task_id"] = r.task_id;
  j["tokens"] = tokens_json(r.tokens);
  j["prompt_length"] = r.prompt_length;
  j["logprobs"] = r.logprobs;
  j["answer"] = r.answer ? json(*r.answer) : json(nullptr);
  j["reward"] = r.reward;
  j["length"] = r.length();
  return j;
}

Rollout rollout_from(const json& j) {
  Rollout r;
  r.id = j.at("id").get<std::string>();
  r.task_id = j.at("task_id").get<std::string>();
  r.tokens = tokens_from(j.at("tokens"));
  r.prompt_length = j.at("prompt_length").get<std::size_t>();
  if (r.prompt_length > r.tokens.size()) throw Error(ErrorKind::kInvalidArgument, "prompt_length exceeds tokens");
  if (j.contains("logprobs")) r.logprobs = j.at("logprobs").get<std::vector<double>>();
  if (j.contains("answer") && !j.at("answer").is_null()) r.answer = j.at("answer").get<std::string>();
  r.reward = j.at("reward").get<int>();
  return r;
}

template <typename F>
auto parse_line(std::string_view line, F&& f) {
  try {
    return f(json::parse(line));
  } catch (const json::exception& e) {
    throw Error(ErrorKind::kInvalidArgument, std::string("malformed record: ") + e.what());
  }
}

template <typename T, typename Decode>
std::vector<T> read_all(const std::filesystem::path& path, Decode decode) {
  std::vector<T> out;
  for (const auto& line : read_lines(path)) out.push_back(decode(line));
  return out;
}

}  // namespace

std::string encode(const TaskInstance& t) {
  json j;
  j["id"] = t.id;
  j["prompt"] = tokens_json(t.prompt);
  j["ground_truth"] = t.ground_truth;
  j["difficulty"] = std::string(difficulty_name(t.difficulty));
  j["domain_tag"] = std::string(domain_name(t.domain_tag));
  j["seed"] = t.seed;
  return j.dump();
}

std::string encode(const TeacherTrace& t) {
  json j;
  j["task_id"] = t.task_id;
  j["tokens"] = tokens_json(t.tokens);
  j["stated_answer"] = t.stated_answer;
  j["is_correct"] = t.is_correct;
  j["length"] = t.length;
  return j.dump();
}

std::string encode(const Rollout& r) { return rollout_json(r).dump(); }

std::string encode(const RewardRecord& r) {
  json j;
  j["rollout_id"] = r.rollout_id;
  j["reward"] = r.reward;
  j["verified_by"] = std::string(verify_stage_name(r.verified_by));
  return j.dump();
}

std::string encode(const PreferencePair& p) {
  json j;
  j["task_id"] = p.task_id;
  j["prompt"] = tokens_json(p.prompt);
  j["preferred"] = rollout_json(p.preferred);
  j["dispreferred"] = rollout_json(p.dispreferred);
  j["difficulty"] = std::string(difficulty_name(p.difficulty));
  return j.dump();
}

TaskInstance decode_task(std::string_view line) {
  return parse_line(line, [](const json& j) {
    TaskInstance t;
    t.id = j.at("id").get<std::string>();
    t.prompt = tokens_from(j.at("prompt"));
    t.ground_truth = j.at("ground_truth").get<std::string>();
    t.difficulty = parse_difficulty(j.at("difficulty").get<std::string>());
    t.domain_tag = parse_domain(j.at("domain_tag").get<std::string>());
    t.seed = j.at("seed").get<std::uint64_t>();
    return t;
  });
}

TeacherTrace decode_trace(std::string_view line) {
  return parse_line(line, [](const json& j) {
    TeacherTrace t;
    t.task_id = j.at("task_id").get<std::string>();
    t.tokens = tokens_from(j.at("tokens"));
    t.stated_answer = j.at("stated_answer").get<std::string>();
    t.is_correct = j.at("is_correct").get<bool>();
    t.length = t.tokens.size();
    return t;
  });
}

Rollout decode_rollout(std::string_view line) {
  return parse_line(line, [](const json& j) { return rollout_from(j); });
}

RewardRecord decode_reward(std::string_view line) {
  return parse_line(line, [](const json& j) {
    RewardRecord r;
    r.rollout_id = j.at("rollout_id").get<std::string>();
    r.reward = j.at("reward").get<int>();
    const auto stage = j.at("verified_by").get<std::string>();
    if (stage == verify_stage_name(VerifyStage::kPrimary)) {
      r.verified_by = VerifyStage::kPrimary;
    } else if (stage == verify_stage_name(VerifyStage::kFallback)) {
      r.verified_by = VerifyStage::kFallback;
    } else {
      throw Error(ErrorKind::kInvalidArgument, "unknown verification stage '" + stage + "'");
    }
    return r;
  });
}

PreferencePair decode_pair(std::string_view line) {
  return parse_line(line, [](const json& j) {
    PreferencePair p;
    p.task_id = j.at("task_id").get<std::string>();
    p.prompt = tokens_from(j.at("prompt"));
    p.preferred = rollout_from(j.at("preferred"));
    p.dispreferred = rollout_from(j.at("dispreferred"));
    p.difficulty = parse_difficulty(j.at("difficulty").get<std::string>());
    return p;
  });
}

template <typename T>
void write_jsonl(const std::filesystem::path& path, const std::vector<T>& records) {
  std::string out;
  for (const auto& r : records) {
    out += encode(r);
    out += '\n';
  }
  write_file_atomic(path, out);
}

template void write_jsonl(const std::filesystem::path&, const std::vector<TaskInstance>&);
template void write_jsonl(const std::filesystem::path&, const std::vector<TeacherTrace>&);
template void write_jsonl(const std::filesystem::path&, const std::vector<Rollout>&);
template void write_jsonl(const std::filesystem::path&, const std::vector<RewardRecord>&);
template void write_jsonl(const std::filesystem::path&, const std::vector<PreferencePair>&);

std::vector<std::string> read_lines(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorKind::kIo, "cannot read " + path.string());
  std::vector<std::string> lines;
  std::string line;
  while (std::getline(in, line)) {
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    lines.push_back(line);
  }
  return lines;
}

std::vector<TaskInstance> read_tasks(const std::filesystem::path& path) {
  return read_all<TaskInstance>(path, decode_task);
}
std::vector<TeacherTrace> read_traces(const std::filesystem::path& path) {
  return read_all<TeacherTrace>(path, decode_trace);
}
std::vector<Rollout> read_rollouts(const std::filesystem::path& path) {
  return read_all<Rollout>(path, decode_rollout);
}
std::vector<RewardRecord> read_rewards(const std::filesystem::path& path) {
  return read_all<RewardRecord>(path, decode_reward);
}
std::vector<PreferencePair> read_pairs(const std::filesystem::path& path) {
  return read_all<PreferencePair>(path, decode_pair);
}

}  // namespace reasonlab
