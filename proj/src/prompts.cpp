#include "traceconf/prompts.hpp"

#include <fstream>
#include <sstream>

#include "traceconf/error.hpp"

namespace traceconf {

namespace {

constexpr std::string_view kPlaceholder = "{question}";

constexpr std::string_view kLinguistic = R"(Begin with a <think> tag and reason through the question step by step to arrive at an answer.
Then, thoroughly assess your confidence in that answer by evaluating your thinking process so far.
End your thinking process with a </think> tag.
Finally, classify your confidence into one of the following classes based on how likely your answer is to be correct:

- "Almost no chance" (0.0–0.1)
- "Highly unlikely" (0.1–0.2)
- "Chances are slight" (0.2–0.3)
- "Unlikely" (0.3–0.4)
- "Less than even" (0.4–0.5)
- "Better than even" (0.5–0.6)
- "Likely" (0.6–0.7)
- "Very good chance" (0.7–0.8)
- "Highly likely" (0.8–0.9)
- "Almost certain" (0.9–1.0)

Each category reflects the probability that your answer is correct.

At the very end of your output, format your answer and confidence as
**Answer**: $ANSWER
**Confidence**: $CLASS
where CLASS is one of the names (only the names without the probability ranges) of the classes above, and ANSWER is your final answer stated as concisely as possible.

{question})";

constexpr std::string_view kNumeric = R"(Begin with a <think> tag and reason through the question step by step to arrive at an answer.
Then, thoroughly assess your confidence in that answer by evaluating your thinking process so far.
End your thinking process with a </think> tag.
Finally, return your confidence as an integer between 0 and 100 based on how likely your answer is to be correct.
That is, if your confidence is 0, that means that your answer has almost no chance of being correct.
If your confidence is 100, then you are almost certain that your answer is correct.

At the very end of your output, format your answer and confidence as:
**Answer**: $ANSWER
**Confidence**: $CONFIDENCE
where CONFIDENCE is an integer between 0 and 100, and ANSWER is your final answer stated as concisely as possible.

{question})";

constexpr std::string_view kTopK = R"(Begin with a <think> tag. Give your K = 5 best guesses to the following question, and also your confidence in each guess (i.e., the probability that each one is correct).
If there are less than 5 possible answers, simply go through all possible answers and give your confidence in each.
Once you have given your K = 5 best guesses and their confidences, end with a </think> tag.
Finally, give your final answer and confidence in the following format:
**Answer**: $ANSWER
**Confidence**: $CONFIDENCE
where CONFIDENCE is an integer between 0 and 100, and ANSWER is your final answer stated as concisely as possible.

{question})";

constexpr std::string_view kAnswerOnly = R"(Begin with a <think> tag and reason through the question step by step to arrive at an answer. At the very end of your output, format your answer as:
**Answer**: $ANSWER
where ANSWER is your final answer stated as concisely as possible.

{question})";

bool mentions_tag(std::string_view s) {
    return s.find("<think>") != std::string_view::npos || s.find("</think>") != std::string_view::npos;
}

// Drops sentences that instruct about reasoning tags; lines left empty by
// that are dropped too, genuinely blank lines are kept.
std::string strip_reasoning_instructions(std::string_view text) {
    std::ostringstream out;
    std::size_t start = 0;
    bool first = true;
    while (start <= text.size()) {
        std::size_t eol = text.find('\n', start);
        if (eol == std::string_view::npos) eol = text.size();
        const std::string_view line = text.substr(start, eol - start);
        std::string kept;
        if (mentions_tag(line)) {
            std::size_t s = 0;
            while (s < line.size()) {
                std::size_t dot = line.find(". ", s);
                const std::size_t end = dot == std::string_view::npos ? line.size() : dot + 1;
                std::string_view sentence = line.substr(s, end - s);
                if (!mentions_tag(sentence)) {
                    while (!sentence.empty() && sentence.front() == ' ') sentence.remove_prefix(1);
                    if (!kept.empty()) kept += ' ';
                    kept += sentence;
                }
                s = end;
                while (s < line.size() && line[s] == ' ') ++s;
            }
            while (!kept.empty() && kept.back() == ' ') kept.pop_back();
            if (kept.empty()) {
                start = eol + 1;
                continue;
            }
        } else {
            kept = std::string(line);
        }
        if (!first) out << '\n';
        out << kept;
        first = false;
        start = eol + 1;
    }
    return out.str();
}

std::string question_block(const Question& q) {
    std::string block = q.text;
    for (std::size_t i = 0; i < q.choices.size(); ++i) {
        block += '\n';
        if (i < 26) {
            block += static_cast<char>('A' + i);
        } else {
            block += std::to_string(i + 1);
        }
        block += ". " + q.choices[i];
    }
    return block;
}

std::string replace_all(std::string s, std::string_view from, const std::string& to) {
    for (std::size_t pos = s.find(from); pos != std::string::npos; pos = s.find(from, pos + to.size())) {
        s.replace(pos, from.size(), to);
    }
    return s;
}

}  // namespace

PromptTemplate PromptTemplate::standard(PromptKind kind, bool reasoning_tags) {
    std::string_view text;
    switch (kind) {
        case PromptKind::linguistic: text = kLinguistic; break;
        case PromptKind::numeric: text = kNumeric; break;
        case PromptKind::topk: text = kTopK; break;
        case PromptKind::answer_only: text = kAnswerOnly; break;
    }
    return {kind, std::string(text), reasoning_tags};
}

PromptTemplate PromptTemplate::load(const std::filesystem::path& path, PromptKind kind, bool reasoning_tags) {
    std::ifstream in(path);
    if (!in) throw ParseError("cannot open prompt template " + path.string());
    std::ostringstream ss;
    ss << in.rdbuf();
    std::string text = ss.str();
    const std::size_t first = text.find(kPlaceholder);
    if (first != std::string::npos && text.find(kPlaceholder, first + 1) != std::string::npos) {
        throw ParseError("prompt template " + path.string() + " has more than one {question} placeholder");
    }
    return {kind, std::move(text), reasoning_tags};
}

std::string render_prompt(const Question& question, const PromptTemplate& tmpl) {
    std::string text = tmpl.reasoning_tags ? tmpl.text : strip_reasoning_instructions(tmpl.text);
    const std::string block = question_block(question);
    if (auto pos = text.find(kPlaceholder); pos != std::string::npos) {
        text.replace(pos, kPlaceholder.size(), block);
    } else {
        text += "\n\n" + block;
    }
    return text;
}

std::string standard_judge_template() {
    return "You are grading whether a candidate answer to a question is correct.\n\n"
           "Question: {question}\n\n"
           "Acceptable gold answers:\n{gold}\n\n"
           "Candidate answer: {answer}\n\n"
           "Is the candidate answer equivalent to any of the gold answers? "
           "Reply with a single word: yes or no.";
}

std::string render_judge_prompt(const std::string& tmpl, const Question& question, const std::string& answer) {
    std::string gold;
    for (const auto& g : question.gold) gold += "- " + g + "\n";
    if (!gold.empty()) gold.pop_back();
    std::string out = replace_all(tmpl, "{question}", question_block(question));
    out = replace_all(std::move(out), "{gold}", gold);
    return replace_all(std::move(out), "{answer}", answer);
}

}  // namespace traceconf
