#pragma once

#include <string_view>

namespace vidfocus {

// Knowledge-augmentation prompt templates. Bump the version string whenever
// the wording changes so generated corpora can be traced to a template.

inline constexpr std::string_view kAbstractTemplateVersion = "abstract-v1";
inline constexpr std::string_view kAbstractTemplate =
    R"(You are given the abstract of a surgical procedure video ({video_id}) and its annotated key steps.
Rewrite the abstract so that it follows the key steps in order. Remove details that are unrelated to
the procedure and add missing context where a key step is not covered. Reply with the rewritten
abstract only.

Key steps:
{keysteps}
Abstract:
{abstract}
)";

inline constexpr std::string_view kKeystepTemplateVersion = "keystep-v1";
inline constexpr std::string_view kKeystepTemplate =
    R"(You are given one annotated key step of a surgical procedure video ({video_id}), spanning
{start_s}s to {end_s}s, and the narration fragments spoken during that span.
Rewrite the key step as a short description that integrates the procedural, anatomical and
instrument details mentioned in the narration. Do not add steps that are not narrated. Reply with
the description only.

Key step: {label}
Narration:
{narrations})";

}  // namespace vidfocus
