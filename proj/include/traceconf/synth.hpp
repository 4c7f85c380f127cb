#pragma once

// Seeded synthetic corpora for desk-scale validation: incorrect generations
// run longer, hedge more and state noisier confidence, and every token step
// carries top-k alternatives with a controlled entropy.

#include <cstdint>
#include <string>
#include <vector>

#include "json.hpp"
#include "traceconf/records.hpp"

namespace traceconf {

struct SyntheticSpec {
    std::size_t n = 1000;
    double accuracy = 0.7;
    std::string dataset = "synthetic";

    // Reasoning length in tokens, normal per class, clipped at min_length.
    double length_mean_correct = 200.0;
    double length_sd_correct = 100.0;
    double length_mean_incorrect = 400.0;
    double length_sd_incorrect = 100.0;
    int min_length = 8;

    // Per-token probability that a reasoning token is an epistemic marker.
    double marker_rate_correct = 0.01;
    double marker_rate_incorrect = 0.03;

    // Verbalized confidence: normal around a class mean, clamped to [0,1],
    // reported as an integer percentage. Independent of length.
    double vc_mean_correct = 0.8;
    double vc_mean_incorrect = 0.6;
    double vc_noise_sd = 0.15;

    // Alternatives per step and the probability mass of the sampled token.
    int top_k = 5;
    double filler_top_prob = 0.95;
    double marker_top_prob = 0.3;

    // Optional token spread uniformly over all records with near-uniform
    // alternatives, i.e. the highest-entropy token in the corpus.
    std::string engineered_token;
    double engineered_rate = 0.0;

    int max_difficulty = 5;  // difficulty drawn uniformly from 1..max
    std::uint64_t seed = 1;
};

nlohmann::json to_json(const SyntheticSpec& spec);
SyntheticSpec synthetic_spec_from_json(const nlohmann::json& j);

struct SyntheticCorpus {
    std::vector<Question> questions;
    std::vector<GenerationRecord> records;  // labeled and extracted
};

/// Throws DegenerateInputError unless 0 < accuracy < 1 and n >= 1.
SyntheticCorpus synth_generate(const SyntheticSpec& spec);

/// Marker tokens the generator injects (leading-space surface forms).
const std::vector<std::string>& synthetic_marker_tokens();

}  // namespace traceconf
