#pragma once

#include <string_view>

namespace dil {

// Versioned prompt text shared by every LLM-backed operator. Placeholders are
// replaced by render_prompt(); {sections} expands to zero or more
// "Title:\n<text>\n" blocks and {feedback} to the violations of the previous
// attempt (empty on the first attempt). Changing this text changes every
// cache key, so bump the version line with it.
inline constexpr std::string_view kPromptTemplateV1 = R"([dil-prompt v1]
Task: {task}
Question: {question}
{sections}Output schema:
{schema}Answer with a JSON array of objects that use only the attributes above.
{feedback})";

inline constexpr std::string_view kPromptTemplateVersion = "v1";

}  // namespace dil
