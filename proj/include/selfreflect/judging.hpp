#pragma once

// Asking a judge for a structured reply, with a single reprompt when the
// first reply does not parse.

#include <optional>
#include <string>

#include "selfreflect/gateway.hpp"

namespace selfreflect {

inline constexpr std::string_view kRepromptSuffix =
    "\n\nYour previous reply could not be parsed. Reply again and follow the requested format exactly.";

inline GenerateRequest judge_request(std::string prompt, std::int64_t seed = 0) {
  GenerateRequest req;
  req.prompt = std::move(prompt);
  req.params = SamplingParams::greedy();
  req.seed = seed;
  req.allow_truncation = true;
  return req;
}

struct JudgeReply {
  std::string raw;  // the reply that parsed
  bool reprompted = false;
};

// Calls `parse(reply)` (returning std::optional<T>) on the judge's reply; on
// failure asks once more with a format reminder, then throws E.
template <typename E = JudgeParseError, typename Parse>
auto ask_judge(const LanguageModel& judge, GenerateRequest req, Parse parse, JudgeReply* info = nullptr) {
  auto reply = judge.generate(req);
  if (auto v = parse(reply)) {
    if (info) *info = {reply, false};
    return *v;
  }
  req.prompt += kRepromptSuffix;
  reply = judge.generate(req);
  if (auto v = parse(reply)) {
    if (info) *info = {reply, true};
    return *v;
  }
  throw E("unparseable judge reply: " + reply.substr(0, 200));
}

}  // namespace selfreflect
