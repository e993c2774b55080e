#pragma once

#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include "reasonlab/rollout.hpp"
#include "reasonlab/task.hpp"
#include "reasonlab/verifier.hpp"

namespace reasonlab {

// Line-delimited JSON records. Token sequences are written as arrays of
// vocabulary symbols. Decoders throw kInvalidArgument on malformed lines.
std::string encode(const TaskInstance& task);
std::string encode(const TeacherTrace& trace);
std::string encode(const Rollout& rollout);
std::string encode(const RewardRecord& record);
std::string encode(const PreferencePair& pair);

TaskInstance decode_task(std::string_view line);
TeacherTrace decode_trace(std::string_view line);
Rollout decode_rollout(std::string_view line);
RewardRecord decode_reward(std::string_view line);
PreferencePair decode_pair(std::string_view line);

template <typename T>
void write_jsonl(const std::filesystem::path& path, const std::vector<T>& records);

// Throws kIo when the file cannot be read; blank lines are skipped.
std::vector<std::string> read_lines(const std::filesystem::path& path);

std::vector<TaskInstance> read_tasks(const std::filesystem::path& path);
std::vector<TeacherTrace> read_traces(const std::filesystem::path& path);
std::vector<Rollout> read_rollouts(const std::filesystem::path& path);
std::vector<RewardRecord> read_rewards(const std::filesystem::path& path);
std::vector<PreferencePair> read_pairs(const std::filesystem::path& path);

}  // namespace reasonlab
