#include "traceconf/synth.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <random>

#include "traceconf/error.hpp"
#include "traceconf/extraction.hpp"

namespace traceconf {

using nlohmann::json;

namespace {

const std::vector<std::string>& filler_tokens() {
    static const std::vector<std::string> words = {
        " the", " we", " so", " value", " compute", " next", " step", " then", " check", " result",
        " is", " equals", " add", " number", " this", " that", " first", " second", " term", " sum"};
    return words;
}

// Sampled token first with mass `top_prob`, the rest spread evenly over
// k - 1 distinct filler alternatives.
TokenStep make_step(const std::string& token, double top_prob, int k, std::mt19937_64& rng) {
    TokenStep step;
    step.token = token;
    step.logprob = std::log(top_prob);
    step.top.push_back({token, step.logprob});
    const auto& pool = filler_tokens();
    const double rest = k > 1 ? std::log((1.0 - top_prob) / (k - 1)) : 0.0;
    std::size_t offset = std::uniform_int_distribution<std::size_t>(0, pool.size() - 1)(rng);
    for (int a = 1; a < k; ++a) {
        std::string alt;
        do {
            alt = pool[offset++ % pool.size()];
        } while (alt == token);
        step.top.push_back({alt, rest});
    }
    std::stable_sort(step.top.begin(), step.top.end(), [](const auto& x, const auto& y) { return x.logprob > y.logprob; });
    return step;
}

// Untokenized delimiters and answer scaffolding: treated as certain.
TokenStep certain_step(std::string token) {
    TokenStep step;
    step.token = std::move(token);
    step.logprob = 0.0;
    step.top.push_back({step.token, 0.0});
    return step;
}

std::string padded(std::size_t i, std::size_t n) {
    const int width = std::max(4, static_cast<int>(std::to_string(n).size()));
    char buf[32];
    std::snprintf(buf, sizeof buf, "%0*zu", width, i);
    return buf;
}

}  // namespace

const std::vector<std::string>& synthetic_marker_tokens() {
    static const std::vector<std::string> markers = {" maybe", " perhaps", " possibly", " however", " or", " considering"};
    return markers;
}

json to_json(const SyntheticSpec& s) {
    return {{"n", s.n},
            {"accuracy", s.accuracy},
            {"dataset", s.dataset},
            {"length_mean_correct", s.length_mean_correct},
            {"length_sd_correct", s.length_sd_correct},
            {"length_mean_incorrect", s.length_mean_incorrect},
            {"length_sd_incorrect", s.length_sd_incorrect},
            {"min_length", s.min_length},
            {"marker_rate_correct", s.marker_rate_correct},
            {"marker_rate_incorrect", s.marker_rate_incorrect},
            {"vc_mean_correct", s.vc_mean_correct},
            {"vc_mean_incorrect", s.vc_mean_incorrect},
            {"vc_noise_sd", s.vc_noise_sd},
            {"top_k", s.top_k},
            {"filler_top_prob", s.filler_top_prob},
            {"marker_top_prob", s.marker_top_prob},
            {"engineered_token", s.engineered_token},
            {"engineered_rate", s.engineered_rate},
            {"max_difficulty", s.max_difficulty},
            {"seed", s.seed}};
}

SyntheticSpec synthetic_spec_from_json(const json& j) {
    SyntheticSpec s;
    s.n = j.value("n", s.n);
    s.accuracy = j.value("accuracy", s.accuracy);
    s.dataset = j.value("dataset", s.dataset);
    s.length_mean_correct = j.value("length_mean_correct", s.length_mean_correct);
    s.length_sd_correct = j.value("length_sd_correct", s.length_sd_correct);
    s.length_mean_incorrect = j.value("length_mean_incorrect", s.length_mean_incorrect);
    s.length_sd_incorrect = j.value("length_sd_incorrect", s.length_sd_incorrect);
    s.min_length = j.value("min_length", s.min_length);
    s.marker_rate_correct = j.value("marker_rate_correct", s.marker_rate_correct);
    s.marker_rate_incorrect = j.value("marker_rate_incorrect", s.marker_rate_incorrect);
    s.vc_mean_correct = j.value("vc_mean_correct", s.vc_mean_correct);
    s.vc_mean_incorrect = j.value("vc_mean_incorrect", s.vc_mean_incorrect);
    s.vc_noise_sd = j.value("vc_noise_sd", s.vc_noise_sd);
    s.top_k = j.value("top_k", s.top_k);
    s.filler_top_prob = j.value("filler_top_prob", s.filler_top_prob);
    s.marker_top_prob = j.value("marker_top_prob", s.marker_top_prob);
    s.engineered_token = j.value("engineered_token", s.engineered_token);
    s.engineered_rate = j.value("engineered_rate", s.engineered_rate);
    s.max_difficulty = j.value("max_difficulty", s.max_difficulty);
    s.seed = j.value("seed", s.seed);
    return s;
}

SyntheticCorpus synth_generate(const SyntheticSpec& spec) {
    if (!(spec.accuracy > 0.0 && spec.accuracy < 1.0)) throw DegenerateInputError("synthetic accuracy must lie in (0,1)");
    if (spec.n == 0) throw DegenerateInputError("synthetic corpus needs n >= 1");
    if (spec.top_k < 1) throw DegenerateInputError("synthetic top_k must be >= 1");

    std::mt19937_64 rng(spec.seed);
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    std::normal_distribution<double> gauss(0.0, 1.0);
    const auto& markers = synthetic_marker_tokens();
    const auto& fillers = filler_tokens();
    const int max_difficulty = std::max(1, spec.max_difficulty);

    SyntheticCorpus corpus;
    corpus.questions.reserve(spec.n);
    corpus.records.reserve(spec.n);
    for (std::size_t i = 0; i < spec.n; ++i) {
        const std::string suffix = padded(i, spec.n);
        Question q;
        q.id = "synth-" + suffix;
        q.dataset = spec.dataset;
        q.text = "Synthetic question " + suffix + "?";
        q.gold = {"A" + suffix};
        q.difficulty = 1 + static_cast<int>(unit(rng) * max_difficulty) % max_difficulty;

        const bool correct = unit(rng) < spec.accuracy;
        const double mean = correct ? spec.length_mean_correct : spec.length_mean_incorrect;
        const double sd = correct ? spec.length_sd_correct : spec.length_sd_incorrect;
        const int length = std::max(spec.min_length, static_cast<int>(std::lround(mean + sd * gauss(rng))));
        const double marker_rate = correct ? spec.marker_rate_correct : spec.marker_rate_incorrect;
        const double engineered_rate = spec.engineered_token.empty() ? 0.0 : spec.engineered_rate;

        GenerationRecord r;
        r.question_id = q.id;
        r.dataset = q.dataset;
        r.prompt_kind = PromptKind::numeric;
        r.gen_params = {0.0, 4096, "synthetic"};
        r.tokens.push_back(certain_step(std::string(kThinkOpen)));
        for (int t = 0; t < length; ++t) {
            const double u = unit(rng);
            if (u < engineered_rate) {
                r.tokens.push_back(make_step(spec.engineered_token, 1.0 / spec.top_k, spec.top_k, rng));
            } else if (u < engineered_rate + marker_rate) {
                const auto& m = markers[std::uniform_int_distribution<std::size_t>(0, markers.size() - 1)(rng)];
                r.tokens.push_back(make_step(m, spec.marker_top_prob, spec.top_k, rng));
            } else {
                const auto& f = fillers[std::uniform_int_distribution<std::size_t>(0, fillers.size() - 1)(rng)];
                r.tokens.push_back(make_step(f, spec.filler_top_prob, spec.top_k, rng));
            }
        }
        r.tokens.push_back(certain_step(std::string(kThinkClose)));

        const double vc_mean = correct ? spec.vc_mean_correct : spec.vc_mean_incorrect;
        const double vc = std::clamp(vc_mean + spec.vc_noise_sd * gauss(rng), 0.0, 1.0);
        const std::string answer = correct ? q.gold.front() : "B" + suffix;
        for (std::string piece : {std::string("\n**Answer**: "), answer, std::string("\n**Confidence**: "),
                                  std::to_string(std::lround(vc * 100.0))}) {
            r.tokens.push_back(certain_step(std::move(piece)));
        }

        std::string raw;
        for (const auto& step : r.tokens) raw += step.token;
        r.set_raw_text(std::move(raw));
        r.extracted = extract_record(r);
        r.correct = correct;
        corpus.questions.push_back(std::move(q));
        corpus.records.push_back(std::move(r));
    }
    return corpus;
}

}  // namespace traceconf
