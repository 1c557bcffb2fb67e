#pragma once

#include <string>
#include <vector>

#include "crucible/core.hpp"
#include "crucible/gateway.hpp"

namespace crucible::judge {

/// Text rendering of a conversation for judging. Image parts appear as an
/// "[IMAGE: ...]" surrogate carrying the source text, so text-only judge
/// models see the full attack content.
std::string render_transcript(const std::vector<core::Turn>& prior_turns,
                              const core::MultiModalPayload& attack_payload,
                              const std::string& response);

std::string render_payload(const core::MultiModalPayload& payload);

/// The full request text sent to the judge model.
std::string build_judge_request(const core::PolicySet& policies,
                                const std::vector<core::Turn>& prior_turns,
                                const core::MultiModalPayload& attack_payload,
                                const std::string& response);

/// Strict verdict grammar: first nonempty line is "safe" or "unsafe"
/// (case-insensitive); "unsafe" must be followed by at least one known policy
/// id, separated by commas or whitespace. Throws UnparseableVerdict.
core::Verdict parse_verdict(const std::string& raw, const core::PolicySet& policies);

/// Asks the judge model for a verdict on the latest exchange. One corrective
/// reprompt is allowed on a grammar failure; the second failure propagates.
core::Verdict judge_turn(gateway::ChatModel& judge_model, const core::PolicySet& policies,
                         const std::vector<core::Turn>& prior_turns,
                         const core::MultiModalPayload& attack_payload,
                         const std::string& response);

}  // namespace crucible::judge
