#pragma once

#include <filesystem>
#include <string>

#include "traceconf/records.hpp"

namespace traceconf {

/// An elicitation prompt. `text` holds a "{question}" placeholder; when it
/// has none the question block is appended after a blank line.
struct PromptTemplate {
    PromptKind kind = PromptKind::answer_only;
    std::string text;
    bool reasoning_tags = true;

    /// The built-in prompt for each kind.
    static PromptTemplate standard(PromptKind kind, bool reasoning_tags = true);
    /// Plain-text template file; the kind is given by the caller.
    static PromptTemplate load(const std::filesystem::path& path, PromptKind kind, bool reasoning_tags = true);
};

/// Fills the template with the question text (and lettered choices when the
/// question has any). With reasoning_tags off, every sentence that mentions
/// a <think> / </think> tag is dropped.
std::string render_prompt(const Question& question, const PromptTemplate& tmpl);

/// Default judge prompt with {question}, {gold} and {answer} placeholders.
std::string standard_judge_template();

std::string render_judge_prompt(const std::string& tmpl, const Question& question, const std::string& answer);

}  // namespace traceconf
