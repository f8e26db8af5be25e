#pragma once

#include <string>

namespace liatm::testing {

inline const std::string kChatBotDfd = R"(system "ChatBot"
external_entity user "End User"
process app "Chat Frontend"
process llm "Chat LLM" tags[llm,guardrails]
data_store history "Conversation Store" tags[sensitive]
flow f1 user -> app : "user message"
flow f2 app -> llm : "assembled prompt"
flow f3 llm -> app : "completion"
flow f4 history -> llm : "retrieved context"
boundary internet "Internet" contains[user]
)";

}  // namespace liatm::testing
