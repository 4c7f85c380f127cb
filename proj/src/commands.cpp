#include "traceconf/commands.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <memory>
#include <set>

#include "traceconf/error.hpp"
#include "traceconf/extraction.hpp"
#include "traceconf/harness.hpp"
#include "traceconf/prompts.hpp"
#include "traceconf/svg.hpp"

namespace traceconf::cli {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

void log(const std::string& msg) { std::cerr << "[traceconf] " << msg << '\n'; }

std::string path_string(const fs::path& p) { return p.generic_string(); }

std::string_view unit_name(LengthUnit u) { return u == LengthUnit::tokens ? "tokens" : "characters"; }

LengthUnit parse_unit(const std::string& s) {
    if (s == "tokens") return LengthUnit::tokens;
    if (s == "characters") return LengthUnit::characters;
    throw ParseError("unknown length unit '" + s + "'");
}

std::string_view scope_name(MarkerScope s) { return s == MarkerScope::whole_output ? "whole_output" : "reasoning_only"; }

MarkerScope parse_scope(const std::string& s) {
    if (s == "whole_output") return MarkerScope::whole_output;
    if (s == "reasoning_only") return MarkerScope::reasoning_only;
    throw ParseError("unknown marker scope '" + s + "'");
}

void require_file(const fs::path& p, const char* what) {
    if (p.empty()) throw Error(std::string("no ") + what + " file configured");
    if (!fs::exists(p)) throw Error(std::string(what) + " file not found: " + p.string());
}

void ensure_parent(const fs::path& p) {
    if (p.has_parent_path()) fs::create_directories(p.parent_path());
}

ExtractionConfig extraction_config(const RunConfig& c) {
    return c.extraction_config.empty() ? ExtractionConfig{} : load_extraction_config(c.extraction_config);
}

// std::vector<bool> is not contiguous; metrics take spans of bool.
struct Labels {
    std::unique_ptr<bool[]> data;
    std::size_t size = 0;
    explicit Labels(const std::vector<bool>& v) : data(new bool[v.size()]), size(v.size()) {
        std::copy(v.begin(), v.end(), data.get());
    }
    std::span<const bool> span() const { return {data.get(), size}; }
};

std::string dataset_label(const GenerationRecord& r) { return r.dataset.empty() ? "default" : r.dataset; }

std::string sanitize(std::string s) {
    for (char& c : s) {
        if (!std::isalnum(static_cast<unsigned char>(c)) && c != '-' && c != '_' && c != '.') c = '_';
    }
    return s;
}

void write_text(const fs::path& path, const std::string& text) {
    ensure_parent(path);
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw Error("cannot write " + path.string());
    out << text;
}

json read_json(const fs::path& path) {
    std::ifstream in(path);
    if (!in) throw ParseError("cannot open " + path.string());
    try {
        return json::parse(in);
    } catch (const json::exception& e) {
        throw ParseError(path.string() + ": " + e.what());
    }
}

// Labels from the verdict file, when one is configured, win over labels
// already stored on the records.
std::vector<GenerationRecord> load_labeled(const RunConfig& c) {
    require_file(c.generations, "generations");
    auto records = load_generations(c.generations);
    if (!c.verdicts.empty() && fs::exists(c.verdicts)) records = merge_verdicts(std::move(records), load_verdicts(c.verdicts));
    return records;
}

const ForkingTokenSet* set_for(const std::vector<ForkingTokenSet>& sets, const std::string& wanted,
                               const std::string& dataset) {
    if (!wanted.empty()) {
        for (const auto& s : sets) {
            if (s.dataset == wanted) return &s;
        }
        throw Error("token-set file has no set for dataset '" + wanted + "'");
    }
    for (const auto& s : sets) {
        if (s.dataset == dataset) return &s;
    }
    return sets.size() == 1 ? &sets.front() : nullptr;
}

}  // namespace

json to_json(const RunConfig& c) {
    return {{"questions", path_string(c.questions)},
            {"generations", path_string(c.generations)},
            {"verdicts", path_string(c.verdicts)},
            {"scores", path_string(c.scores)},
            {"token_sets", path_string(c.token_sets)},
            {"out_dir", path_string(c.out_dir)},
            {"failures", path_string(c.failures)},
            {"extraction_config", path_string(c.extraction_config)},
            {"prompt_template", path_string(c.prompt_template)},
            {"judge_template", path_string(c.judge_template)},
            {"estimators", c.estimators},
            {"unit", unit_name(c.unit)},
            {"k_top", c.entropy.k_top},
            {"renormalize", c.entropy.renormalize},
            {"marker_scope", scope_name(c.marker_scope)},
            {"discovery", to_json(c.discovery)},
            {"threads", c.threads},
            {"prompt_kind", to_string(c.prompt_kind)},
            {"reasoning_tags", c.reasoning_tags},
            {"endpoint", to_json(c.endpoint)},
            {"judge_endpoint", to_json(c.judge_endpoint)},
            {"ece_intervals", c.ece.intervals},
            {"ece_variant", c.ece.variant == EceVariant::mass_weighted ? "mass_weighted" : "binned"},
            {"heatmap_vc_bins", c.heatmap_vc_bins},
            {"heatmap_tl_bins", c.heatmap_tl_bins},
            {"synth", to_json(c.synth)}};
}

RunConfig run_config_from_json(const json& j) {
    RunConfig c;
    auto path = [&](const char* key, fs::path& out) {
        if (auto it = j.find(key); it != j.end() && it->is_string()) out = it->get<std::string>();
    };
    path("questions", c.questions);
    path("generations", c.generations);
    path("verdicts", c.verdicts);
    path("scores", c.scores);
    path("token_sets", c.token_sets);
    path("out_dir", c.out_dir);
    path("failures", c.failures);
    path("extraction_config", c.extraction_config);
    path("prompt_template", c.prompt_template);
    path("judge_template", c.judge_template);
    c.estimators = j.value("estimators", c.estimators);
    if (auto it = j.find("unit"); it != j.end()) c.unit = parse_unit(it->get<std::string>());
    c.entropy.k_top = j.value("k_top", c.entropy.k_top);
    c.entropy.renormalize = j.value("renormalize", c.entropy.renormalize);
    if (auto it = j.find("marker_scope"); it != j.end()) c.marker_scope = parse_scope(it->get<std::string>());
    if (auto it = j.find("discovery"); it != j.end()) c.discovery = discovery_config_from_json(*it);
    c.threads = j.value("threads", c.threads);
    if (auto it = j.find("prompt_kind"); it != j.end()) c.prompt_kind = parse_prompt_kind(it->get<std::string>());
    c.reasoning_tags = j.value("reasoning_tags", c.reasoning_tags);
    if (auto it = j.find("endpoint"); it != j.end()) c.endpoint = endpoint_config_from_json(*it);
    if (auto it = j.find("judge_endpoint"); it != j.end()) c.judge_endpoint = endpoint_config_from_json(*it);
    c.ece.intervals = j.value("ece_intervals", c.ece.intervals);
    if (auto it = j.find("ece_variant"); it != j.end()) {
        const auto v = it->get<std::string>();
        if (v == "mass_weighted") {
            c.ece.variant = EceVariant::mass_weighted;
        } else if (v == "binned") {
            c.ece.variant = EceVariant::binned;
        } else {
            throw ParseError("unknown ece_variant '" + v + "'");
        }
    }
    c.heatmap_vc_bins = j.value("heatmap_vc_bins", c.heatmap_vc_bins);
    c.heatmap_tl_bins = j.value("heatmap_tl_bins", c.heatmap_tl_bins);
    if (auto it = j.find("synth"); it != j.end()) c.synth = synthetic_spec_from_json(*it);
    return c;
}

RunConfig load_run_config(const fs::path& path) {
    try {
        return run_config_from_json(read_json(path));
    } catch (const json::exception& e) {
        throw ParseError(path.string() + ": " + e.what());
    }
}

std::size_t cmd_questions_validate(const RunConfig& c) {
    require_file(c.questions, "questions");
    const auto questions = load_questions(c.questions);
    std::size_t without_gold = 0;
    for (const auto& q : questions) without_gold += q.gold.empty() ? 1 : 0;
    if (without_gold) log(std::to_string(without_gold) + " questions have no gold answers and cannot be judged");
    return questions.size();
}

GenerateSummary cmd_generate(const RunConfig& c, ChatEndpoint* endpoint) {
    require_file(c.questions, "questions");
    if (c.generations.empty()) throw Error("no generations output path configured");
    const auto questions = load_questions(c.questions);
    const PromptTemplate tmpl = c.prompt_template.empty()
                                    ? PromptTemplate::standard(c.prompt_kind, c.reasoning_tags)
                                    : PromptTemplate::load(c.prompt_template, c.prompt_kind, c.reasoning_tags);
    const ExtractionConfig ex = extraction_config(c);
    std::optional<HttpChatEndpoint> http;
    if (!endpoint) endpoint = &http.emplace(c.endpoint);

    const auto result = generate(questions, tmpl, *endpoint, run_settings(c.endpoint), {false, &ex.scale});
    ensure_parent(c.generations);
    write_generations(c.generations, result.records, {{"command", "generate"}, {"config", to_json(c)}});
    const fs::path failures = c.failures.empty() ? fs::path(c.generations.string() + ".failures.jsonl") : c.failures;
    write_failures(failures, result.failures);
    if (!result.failures.empty()) {
        log(std::to_string(result.failures.size()) + " questions failed permanently; see " + failures.string());
    }
    return {result.records.size(), result.failures.size(), result.missing_logprobs};
}

JudgeSummary cmd_judge(const RunConfig& c, ChatEndpoint* endpoint) {
    require_file(c.questions, "questions");
    require_file(c.generations, "generations");
    if (c.verdicts.empty()) throw Error("no verdicts output path configured");
    const auto questions = load_questions(c.questions);
    auto records = load_generations(c.generations);
    const ExtractionConfig ex = extraction_config(c);
    for (auto& r : records) {
        if (!r.extracted) r.extracted = extract_record(r, {false, &ex.scale});
    }
    std::string tmpl = standard_judge_template();
    if (!c.judge_template.empty()) {
        std::ifstream in(c.judge_template);
        if (!in) throw ParseError("cannot open judge template " + c.judge_template.string());
        tmpl.assign(std::istreambuf_iterator<char>(in), {});
    }
    std::optional<HttpChatEndpoint> http;
    if (!endpoint) endpoint = &http.emplace(c.judge_endpoint);

    const auto result = judge(records, questions, *endpoint, tmpl, run_settings(c.judge_endpoint));
    ensure_parent(c.verdicts);
    write_verdicts(c.verdicts, result.verdicts, {{"command", "judge"}, {"config", to_json(c)}});
    const fs::path failures = c.failures.empty() ? fs::path(c.verdicts.string() + ".failures.jsonl") : c.failures;
    write_failures(failures, result.failures);
    log("judge: " + std::to_string(result.exact_matches) + " exact matches, " + std::to_string(result.judge_calls) +
        " judge calls, " + std::to_string(result.failures.size()) + " failures");
    return {result.verdicts.size(), result.failures.size(), result.exact_matches, result.judge_calls};
}

void cmd_synth(const RunConfig& c) {
    if (c.questions.empty() || c.generations.empty()) throw Error("synth needs questions and generations output paths");
    const auto corpus = synth_generate(c.synth);
    ensure_parent(c.questions);
    ensure_parent(c.generations);
    write_questions(c.questions, corpus.questions);
    write_generations(c.generations, corpus.records, {{"command", "synth"}, {"synth", to_json(c.synth)}});
    if (!c.verdicts.empty()) {
        std::vector<Verdict> verdicts;
        for (const auto& r : corpus.records) verdicts.push_back({r.question_id, *r.correct, "synthetic"});
        ensure_parent(c.verdicts);
        write_verdicts(c.verdicts, verdicts);
    }
}

std::vector<ConfidenceScore> score_records(std::span<const GenerationRecord> records, const RunConfig& c,
                                           std::span<const ForkingTokenSet> token_sets, ScoreSummary* summary) {
    const ExtractionConfig ex = extraction_config(c);
    MarkerPatternSet markers = ex.markers;
    const std::vector<ForkingTokenSet> sets(token_sets.begin(), token_sets.end());

    std::vector<EstimatorKind> selected;
    for (const auto& name : c.estimators) selected.push_back(EstimatorKind::parse(name));

    // Column per estimator kind, aligned with `records`.
    std::map<std::string, std::vector<ConfidenceScore>> cache;
    std::function<const std::vector<ConfidenceScore>&(const EstimatorKind&)> column =
        [&](const EstimatorKind& kind) -> const std::vector<ConfidenceScore>& {
        const std::string key = kind.name();
        if (auto it = cache.find(key); it != cache.end()) return it->second;
        std::vector<ConfidenceScore> col;
        col.reserve(records.size());
        using F = EstimatorKind::Family;
        switch (kind.family) {
            case F::TL:
                for (const auto& r : records) col.push_back(trace_length(r, c.unit));
                break;
            case F::VC:
                for (const auto& r : records) {
                    if (r.extracted) {
                        col.push_back(verbal_confidence(r));
                    } else {
                        GenerationRecord copy = r;
                        copy.extracted = extract_record(r, {false, &ex.scale});
                        col.push_back(verbal_confidence(copy));
                    }
                }
                break;
            case F::SP:
                for (const auto& r : records) col.push_back(sequence_probability(r));
                break;
            case F::SUMENT:
                for (const auto& r : records) col.push_back(sum_entropy(r, c.entropy));
                break;
            case F::FT: {
                if (sets.empty()) throw Error("FT selected without a token-set file");
                std::map<const ForkingTokenSet*, TokenSet> members;
                for (const auto& r : records) {
                    const ForkingTokenSet* set = set_for(sets, kind.set_id, dataset_label(r));
                    if (!set) {
                        col.push_back(ConfidenceScore::absent(r.question_id, kind));
                        continue;
                    }
                    auto it = members.find(set);
                    if (it == members.end()) it = members.emplace(set, set->all()).first;
                    col.push_back(forking_count(r, it->second));
                }
                break;
            }
            case F::EM:
                for (const auto& r : records) col.push_back(marker_count(r, markers, c.marker_scope));
                break;
            case F::FUSED: {
                std::vector<std::vector<ConfidenceScore>> member_cols;
                for (const auto& m : kind.members) member_cols.push_back(column(m));
                FusionResult fused = zscore_fuse(member_cols);
                std::size_t next = 0;
                for (std::size_t i = 0; i < records.size(); ++i) {
                    const bool usable = std::all_of(member_cols.begin(), member_cols.end(),
                                                    [&](const auto& mc) { return !mc[i].missing; });
                    col.push_back(usable ? fused.scores[next++] : ConfidenceScore::absent(records[i].question_id, kind));
                }
                if (summary) summary->fusion_excluded[key] = fused.excluded;
                log(key + ": " + std::to_string(fused.excluded) + " rows excluded for a missing member");
                break;
            }
        }
        for (auto& s : col) s.estimator = kind;
        return cache.emplace(key, std::move(col)).first->second;
    };

    std::vector<const std::vector<ConfidenceScore>*> cols;
    for (const auto& kind : selected) cols.push_back(&column(kind));

    std::vector<ConfidenceScore> out;
    out.reserve(records.size() * selected.size());
    for (std::size_t i = 0; i < records.size(); ++i) {
        for (const auto* col : cols) out.push_back((*col)[i]);
    }
    if (summary) {
        summary->rows = records.size();
        for (std::size_t k = 0; k < selected.size(); ++k) {
            const std::string name = selected[k].name();
            summary->columns.push_back(name);
            summary->missing[name] = static_cast<std::size_t>(
                std::count_if(cols[k]->begin(), cols[k]->end(), [](const ConfidenceScore& s) { return s.missing; }));
        }
    }
    return out;
}

ScoreSummary cmd_score(const RunConfig& c) {
    require_file(c.generations, "generations");
    if (c.scores.empty()) throw Error("no scores output path configured");
    const auto records = load_generations(c.generations);
    if (records.empty()) throw Error("generations file is empty: " + c.generations.string());

    std::vector<ForkingTokenSet> sets;
    const bool wants_ft = std::any_of(c.estimators.begin(), c.estimators.end(),
                                      [](const std::string& e) { return e.find("FT") != std::string::npos; });
    if (wants_ft) {
        if (c.token_sets.empty()) throw Error("FT selected without a token-set file");
        require_file(c.token_sets, "token-set");
        sets = load_forking_sets(c.token_sets);
    }
    ScoreSummary summary;
    const auto scores = score_records(records, c, sets, &summary);
    ensure_parent(c.scores);
    write_scores(c.scores, scores, {{"command", "score"}, {"config", to_json(c)}});
    for (const auto& [name, missing] : summary.missing) {
        if (missing) log(name + ": " + std::to_string(missing) + " of " + std::to_string(summary.rows) + " records missing");
    }
    return summary;
}

std::vector<ForkingTokenSet> cmd_discover(const RunConfig& c) {
    require_file(c.generations, "generations");
    if (c.token_sets.empty()) throw Error("no token-set output path configured");
    const auto records = load_generations(c.generations);
    std::map<std::string, std::vector<GenerationRecord>> by_dataset;
    for (const auto& r : records) by_dataset[dataset_label(r)].push_back(r);
    if (by_dataset.empty()) throw Error("generations file is empty: " + c.generations.string());

    std::vector<ForkingTokenSet> sets;
    for (const auto& [dataset, group] : by_dataset) {
        const auto stats = aggregate_token_entropy(group, c.discovery, c.threads);
        try {
            sets.push_back(select_forking_tokens(stats, c.discovery, dataset));
        } catch (const DegenerateInputError& e) {
            throw DegenerateInputError("dataset '" + dataset + "': " + e.what());
        }
    }
    ensure_parent(c.token_sets);
    write_forking_sets(c.token_sets, sets);
    return sets;
}

std::string render_auroc_table(const std::vector<EvalReport>& reports) {
    std::vector<std::string> rows = {"ALL"};
    std::set<std::string> datasets;
    for (const auto& r : reports) {
        for (const auto& [key, _] : r.strata) {
            if (key.starts_with("dataset=")) datasets.insert(key.substr(8));
        }
    }
    rows.insert(rows.end(), datasets.begin(), datasets.end());

    auto lookup = [](const EvalReport& r, const std::string& row) -> std::optional<double> {
        if (row == "ALL") return r.auroc;
        auto it = r.strata.find("dataset=" + row);
        return it == r.strata.end() ? std::nullopt : it->second.auroc;
    };
    auto fmt = [](double v) {
        char buf[32];
        std::snprintf(buf, sizeof buf, "%.1f", v * 100.0);
        return std::string(buf);
    };

    std::string out = "dataset";
    for (const auto& r : reports) out += "\t" + r.estimator;
    out += '\n';
    for (const auto& row : rows) {
        // Best by the rendered value so visual ties are all starred.
        std::string best;
        for (const auto& r : reports) {
            if (auto v = lookup(r, row)) {
                const std::string s = fmt(*v);
                if (best.empty() || std::stod(s) > std::stod(best)) best = s;
            }
        }
        out += row;
        for (const auto& r : reports) {
            const auto v = lookup(r, row);
            out += '\t';
            if (!v) {
                out += "NA";
                continue;
            }
            const std::string s = fmt(*v);
            out += s;
            if (s == best) out += '*';
        }
        out += '\n';
    }
    return out;
}

EvalSummary cmd_eval(const RunConfig& c) {
    auto records = load_labeled(c);
    require_file(c.scores, "scores");
    const auto scores = load_scores(c.scores);

    std::map<std::string, int> difficulty;
    if (!c.questions.empty() && fs::exists(c.questions)) {
        for (const auto& q : load_questions(c.questions)) {
            if (q.difficulty) difficulty[q.id] = *q.difficulty;
        }
    }

    // Record index by (question_id, ordinal).
    std::map<std::pair<std::string, std::size_t>, std::size_t> index;
    {
        std::map<std::string, std::size_t> seen;
        for (std::size_t i = 0; i < records.size(); ++i) index[{records[i].question_id, seen[records[i].question_id]++}] = i;
    }

    // Columns in first-seen estimator order, each aligned to records.
    std::vector<std::string> order;
    std::map<std::string, std::vector<std::optional<double>>> columns;
    {
        std::map<std::string, std::map<std::string, std::size_t>> seen;
        for (const auto& s : scores) {
            const std::string name = s.estimator.name();
            auto [it, inserted] = columns.try_emplace(name, records.size());
            if (inserted) order.push_back(name);
            auto rec = index.find({s.question_id, seen[name][s.question_id]++});
            if (rec == index.end()) throw ParseError("score for unknown question id '" + s.question_id + "'");
            if (!s.missing) it->second[rec->second] = s.value;
        }
    }

    EvalSummary summary;
    EvalOptions opts{c.ece, true};
    for (const auto& name : order) {
        const auto& col = columns[name];
        const bool is_vc = name == "VC";
        std::vector<EvalInstance> inst;
        std::vector<std::string> ds_strata;
        std::vector<std::string> diff_strata;
        std::size_t dropped = 0;
        std::size_t unlabeled = 0;
        for (std::size_t i = 0; i < records.size(); ++i) {
            if (!records[i].correct) {
                ++unlabeled;
                continue;
            }
            if (!col[i]) {
                ++dropped;
                continue;
            }
            EvalInstance e{*col[i], *records[i].correct, std::nullopt};
            if (is_vc) e.confidence_prob = std::clamp(*col[i], 0.0, 1.0);
            inst.push_back(e);
            ds_strata.push_back("dataset=" + dataset_label(records[i]));
            auto d = difficulty.find(records[i].question_id);
            diff_strata.push_back(d == difficulty.end() ? "" : "difficulty=" + std::to_string(d->second));
        }
        if (unlabeled) log(name + ": " + std::to_string(unlabeled) + " unlabeled records ignored");
        EvalReport report;
        if (inst.empty()) {
            report.auroc_error = "no labeled rows with a score";
        } else {
            report = evaluate(inst, opts);
            report.strata = stratified_report(inst, ds_strata, opts);
            std::vector<EvalInstance> with_diff;
            std::vector<std::string> diff_labels;
            for (std::size_t i = 0; i < inst.size(); ++i) {
                if (diff_strata[i].empty()) continue;
                with_diff.push_back(inst[i]);
                diff_labels.push_back(diff_strata[i]);
            }
            for (auto& [k, v] : stratified_report(with_diff, diff_labels, opts)) report.strata.emplace(k, std::move(v));
        }
        report.estimator = name;
        report.n_dropped_missing = dropped;
        if (!report.auroc_error.empty()) log(name + ": AUROC unavailable: " + report.auroc_error);
        summary.reports.push_back(std::move(report));
    }
    summary.table = render_auroc_table(summary.reports);

    json out = {{"_meta", {{"command", "eval"}, {"config", to_json(c)}}}};
    json reps = json::array();
    for (const auto& r : summary.reports) reps.push_back(to_json(r));
    out["reports"] = std::move(reps);

    // Raw trace lengths by correctness, VC x TL heatmap and correlations.
    if (columns.count("TL")) {
        const auto& tl = columns["TL"];
        json hist = {{"correct", json::array()}, {"incorrect", json::array()}};
        for (std::size_t i = 0; i < records.size(); ++i) {
            if (records[i].correct && tl[i]) hist[*records[i].correct ? "correct" : "incorrect"].push_back(-*tl[i]);
        }
        out["length_histogram"] = std::move(hist);
        if (columns.count("VC")) {
            const auto& vc = columns["VC"];
            std::vector<double> xs, ys;
            std::vector<bool> labels;
            for (std::size_t i = 0; i < records.size(); ++i) {
                if (!records[i].correct || !tl[i] || !vc[i]) continue;
                xs.push_back(*vc[i]);
                ys.push_back(-*tl[i]);
                labels.push_back(*records[i].correct);
            }
            const Heatmap h = correctness_heatmap(xs, ys, Labels(labels).span(), c.heatmap_vc_bins, c.heatmap_tl_bins);
            json cells = json::array();
            for (const auto& row : h.cells) {
                json jr = json::array();
                for (const auto& cell : row) {
                    jr.push_back({{"mean_correct", cell.empty ? json(nullptr) : json(cell.mean_correct)},
                                  {"count", cell.count}});
                }
                cells.push_back(std::move(jr));
            }
            out["heatmap"] = {{"vc_edges", h.vc_edges}, {"tl_edges", h.tl_edges}, {"cells", std::move(cells)}};
            try {
                out["correlations"]["spearman_VC_TL"] = spearman(xs, ys);
            } catch (const DegenerateInputError& e) {
                out["correlations"]["spearman_VC_TL"] = nullptr;
            }
        }
    }

    if (!c.token_sets.empty() && fs::exists(c.token_sets)) {
        json forking = json::array();
        for (const auto& set : load_forking_sets(c.token_sets)) {
            std::vector<GenerationRecord> group;
            for (const auto& r : records) {
                if (set.dataset == dataset_label(r) || set.dataset.empty()) group.push_back(r);
            }
            json entry = {{"dataset", set.dataset}};
            try {
                json curve = json::array();
                for (const auto& p : cumulative_auroc_curve(group, set)) curve.push_back({p.k, p.auroc});
                const auto greedy = greedy_working_set(group, set, set.tokens.size());
                const auto best = best_forking_token(group, set);
                entry["cumulative"] = std::move(curve);
                entry["greedy"] = {{"tokens", greedy.tokens}, {"trajectory", greedy.trajectory}};
                entry["best_token"] = {{"token", best.token}, {"auroc", best.auroc}};

                std::vector<double> tl, sp, se, ft;
                std::vector<bool> labels;
                const TokenSet all = set.all();
                for (const auto& r : group) {
                    if (!r.correct || r.tokens.empty()) continue;
                    tl.push_back(trace_length(r, LengthUnit::tokens).value);
                    sp.push_back(sequence_probability(r).value);
                    se.push_back(sum_entropy(r, c.entropy).value);
                    ft.push_back(forking_count(r, all).value);
                    labels.push_back(*r.correct);
                }
                const Labels lab(labels);
                entry["reference"] = {{"TL", auroc(tl, lab.span())},
                                      {"SP", auroc(sp, lab.span())},
                                      {"SUMENT", auroc(se, lab.span())}};
                try {
                    entry["spearman_TL_FT"] = spearman(tl, ft);
                } catch (const DegenerateInputError&) {
                    entry["spearman_TL_FT"] = nullptr;
                }
            } catch (const DegenerateInputError& e) {
                entry["error"] = e.what();
            }
            forking.push_back(std::move(entry));
        }
        out["forking"] = std::move(forking);
    }

    fs::create_directories(c.out_dir);
    write_text(c.out_dir / "report.json", out.dump(2) + "\n");
    write_text(c.out_dir / "auroc_table.tsv", summary.table);
    return summary;
}

std::vector<fs::path> cmd_report(const RunConfig& c) {
    const fs::path report_path = c.out_dir / "report.json";
    require_file(report_path, "eval report");
    const json rep = read_json(report_path);
    std::vector<fs::path> written;
    auto emit = [&](const std::string& name, const std::string& svg) {
        write_text(c.out_dir / name, svg);
        written.push_back(c.out_dir / name);
    };

    std::vector<EvalReport> reports;
    for (const auto& r : rep.at("reports")) reports.push_back(eval_report_from_json(r));

    auto roc_series = [](const EvalReport& r, std::size_t color) {
        svg::Series s{r.estimator, {}, svg::palette(color), false};
        char buf[64];
        if (r.auroc) {
            std::snprintf(buf, sizeof buf, " (AUROC %.1f)", *r.auroc * 100.0);
            s.label += buf;
        }
        for (const auto& p : r.roc) s.points.emplace_back(p.fpr, p.tpr);
        return s;
    };

    {
        std::vector<svg::Series> series;
        std::vector<std::string> notes;
        for (std::size_t i = 0; i < reports.size(); ++i) {
            if (reports[i].roc.empty()) {
                notes.push_back(reports[i].estimator + " omitted: " + reports[i].auroc_error);
                continue;
            }
            series.push_back(roc_series(reports[i], i));
        }
        series.push_back({"chance", {{0.0, 0.0}, {1.0, 1.0}}, "#999999", true});
        emit("roc.svg", svg::line_chart({"ROC curves", "false positive rate", "true positive rate",
                                         std::pair{0.0, 1.0}, std::pair{0.0, 1.0}},
                                        series, {}, notes));
    }

    // ROC per difficulty level for each estimator that has difficulty strata.
    for (std::size_t i = 0; i < reports.size(); ++i) {
        std::vector<svg::Series> series;
        std::vector<std::string> notes;
        std::size_t color = 0;
        for (const auto& [key, sub] : reports[i].strata) {
            if (!key.starts_with("difficulty=")) continue;
            if (sub.roc.empty()) {
                notes.push_back(key + " omitted: " + (sub.auroc_error.empty() ? "empty stratum" : "single class"));
                continue;
            }
            auto s = roc_series(sub, color++);
            s.label = key + s.label.substr(sub.estimator.size());
            series.push_back(std::move(s));
        }
        if (series.empty() && notes.empty()) continue;
        emit("roc_by_difficulty_" + sanitize(reports[i].estimator) + ".svg",
             svg::line_chart({reports[i].estimator + " by difficulty", "false positive rate", "true positive rate",
                              std::pair{0.0, 1.0}, std::pair{0.0, 1.0}},
                             series, {}, notes));
    }

    if (auto it = rep.find("length_histogram"); it != rep.end()) {
        svg::HistogramGroup correct{"correct", it->at("correct").get<std::vector<double>>(), "#2ca02c"};
        svg::HistogramGroup incorrect{"incorrect", it->at("incorrect").get<std::vector<double>>(), "#d62728"};
        emit("length_histogram.svg", svg::histogram_chart({"Trace length by correctness", "trace length", "density",
                                                            std::nullopt, std::nullopt},
                                                           {correct, incorrect}));
    }

    if (auto it = rep.find("heatmap"); it != rep.end()) {
        Heatmap h;
        h.vc_edges = it->at("vc_edges").get<std::vector<double>>();
        h.tl_edges = it->at("tl_edges").get<std::vector<double>>();
        for (const auto& row : it->at("cells")) {
            std::vector<HeatmapCell> cells;
            for (const auto& cell : row) {
                HeatmapCell hc;
                hc.count = cell.at("count").get<std::size_t>();
                hc.empty = hc.count == 0;
                if (!hc.empty) hc.mean_correct = cell.at("mean_correct").get<double>();
                cells.push_back(hc);
            }
            h.cells.push_back(std::move(cells));
        }
        emit("heatmap_correctness.svg",
             svg::heatmap_chart({"Mean correctness by VC and TL", "trace length (quantile bins)", "verbalized confidence",
                                 std::nullopt, std::nullopt},
                                h, false));
        emit("heatmap_density.svg", svg::heatmap_chart({"Sample density by VC and TL", "trace length (quantile bins)",
                                                         "verbalized confidence", std::nullopt, std::nullopt},
                                                        h, true));
    }

    if (auto it = rep.find("forking"); it != rep.end()) {
        for (const auto& entry : *it) {
            const std::string dataset = entry.value("dataset", "default");
            const std::string name = "forking_" + sanitize(dataset.empty() ? "default" : dataset) + ".svg";
            svg::Axes axes{"Forking-token count AUROC (" + dataset + ")", "number of tokens k", "AUROC", std::nullopt,
                           std::nullopt};
            if (entry.contains("error")) {
                emit(name, svg::line_chart(axes, {}, {}, {"omitted: " + entry["error"].get<std::string>()}));
                continue;
            }
            svg::Series cumulative{"top-k by entropy", {}, "#1f77b4", false};
            for (const auto& p : entry.at("cumulative")) {
                if (p[0].get<std::size_t>() == 0) continue;
                cumulative.points.emplace_back(p[0].get<double>(), p[1].get<double>());
            }
            svg::Series greedy{"greedy working set", {}, "#9467bd", false};
            const auto traj = entry.at("greedy").at("trajectory").get<std::vector<double>>();
            for (std::size_t k = 0; k < traj.size(); ++k) greedy.points.emplace_back(static_cast<double>(k + 1), traj[k]);
            const auto& ref = entry.at("reference");
            char note[96];
            std::snprintf(note, sizeof note, "summed entropy AUROC %.3f", ref.at("SUMENT").get<double>());
            std::vector<std::string> notes = {note, "best token: " + entry.at("best_token").at("token").get<std::string>()};
            emit(name, svg::line_chart(axes, {cumulative, greedy},
                                       {{"trace length", ref.at("TL").get<double>(), "#ff7f0e"},
                                        {"sequence probability", ref.at("SP").get<double>(), "#2ca02c"}},
                                       notes));
        }
    }
    return written;
}

}  // namespace traceconf::cli
