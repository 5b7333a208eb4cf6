// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <iomanip>
#include <optional>
#include <ostream>
#include <span>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "prunelens/metrics.hpp"
#include "prunelens/parallel.hpp"
#include "prunelens/tokenizer.hpp"

namespace prunelens {

struct RunRecord {
    NameEntry name;
    std::size_t name_index = 0;
    std::string variation;
    std::size_t repetition = 0;
    std::string raw_output;
    std::optional<double> numeric_value;
    std::uint64_t seed = 0;
    std::string error; // nonempty when generation failed for this record

    friend bool operator==(const RunRecord&, const RunRecord&) = default;
};

struct BatteryOptions {
    std::size_t reps = 100;
    double temperature = 0.6;
    std::uint64_t base_seed = 0;
    std::size_t max_new = 32;
    // Answers are read up to their first quantity, so sampling may stop there.
    bool stop_at_quantity = true;
    // Keep sampling past eos until a quantity appears; the toy model otherwise
    // ends about 1% of answers before naming any number.
    bool require_quantity = true;
    std::size_t workers = 1;
};

/// Seed of repetition r for name i; a pure function so order and worker count do not matter.
inline std::uint64_t record_seed(std::uint64_t base_seed, std::size_t name_index, std::size_t rep) {
    return rng::derive({base_seed, name_index, rep});
}

/// Runs every (name, repetition) pair of one prompt variation.
///
/// Records come back name-major, repetition-minor. The prompt is prefilled
/// once per name and the decoder state is forked for each repetition, which
/// gives the same samples as regenerating from scratch.
inline std::vector<RunRecord> run_battery(const Checkpoint& ckpt, const PruneMask& mask, const Tokenizer& tok,
                                          const PromptSpec& spec, std::span<const NameEntry> names,
                                          const BatteryOptions& opt) {
    if (opt.reps < 1) throw InputError("run_battery: reps must be >= 1");
    bool black = false, white = false;
    for (const auto& n : names) (n.group == RaceGroup::black ? black : white) = true;
    if (!black || !white) throw InputError("run_battery: names must cover both groups");
    mask.validate(ckpt.config);

    std::vector<RunRecord> out(names.size() * opt.reps);
    const VocabLayout& layout = tok.layout();
    parallel_for(names.size(), opt.workers, [&](std::size_t i) {
        std::optional<Decoder> primed;
        std::vector<float> last;
        std::string prefill_error;
        try {
            const auto prompt = tok.encode_prompt(spec, names[i]);
            primed.emplace(ckpt, mask);
            const Tensor lg = primed->feed(prompt, nullptr, true);
            last.assign(lg.data().begin(), lg.data().end());
        } catch (const Error& e) {
            prefill_error = e.what();
        }
        for (std::size_t r = 0; r < opt.reps; ++r) {
            RunRecord& rec = out[i * opt.reps + r];
            rec.name = names[i];
            rec.name_index = i;
            rec.variation = spec.variation;
            rec.repetition = r;
            rec.seed = record_seed(opt.base_seed, i, r);
            if (!prefill_error.empty()) {
                rec.error = prefill_error;
                continue;
            }
            try {
                GenerateOptions g;
                g.temperature = opt.temperature;
                g.max_new = opt.max_new;
                g.seed = rec.seed;
                g.eos = static_cast<TokenId>(VocabLayout::kEos);
                g.suppress_eos = opt.require_quantity;
                if (opt.stop_at_quantity) g.stop_after = [&layout](TokenId t) { return layout.is_numeral(t); };
                const auto tokens = continue_generation(*primed, last, g);
                rec.raw_output = tok.decode(tokens);
                rec.numeric_value = extract_numeric(rec.raw_output);
            } catch (const Error& e) {
                rec.error = e.what();
            }
        }
    });
    return out;
}

inline std::vector<double> numeric_values(std::span<const RunRecord> records, std::optional<RaceGroup> group = {}) {
    std::vector<double> out;
    for (const auto& r : records)
        if (r.numeric_value && (!group || r.name.group == *group)) out.push_back(*r.numeric_value);
    return out;
}

inline double inlier_ratio(std::span<const RunRecord> records, std::pair<double, double> range) {
    std::vector<std::optional<double>> values;
    values.reserve(records.size());
    for (const auto& r : records) values.push_back(r.numeric_value);
    return inlier_ratio(values, range);
}

struct WinsorPercentiles {
    double lo = 1.0, hi = 99.0;
};

/// Utility reference range: winsorization bounds of the unpruned numeric answers.
inline std::pair<double, double> reference_range(std::span<const RunRecord> unpruned, WinsorPercentiles w = {}) {
    const auto values = numeric_values(unpruned);
    if (values.empty()) throw InputError("reference range: unpruned model produced no numeric answers");
    return percentile_bounds(values, w.lo, w.hi);
}

struct DisparityReport {
    std::string variation;
    std::string label; // e.g. "unpruned" or a protocol name
    double smd = 0.0, pooled_sd = 0.0; // on winsorized values
    double smd_raw = 0.0, pooled_sd_raw = 0.0; // without winsorization
    double emd = 0.0; // on winsorized values
    double inlier_ratio = 0.0;
    std::size_t records_black = 0, records_white = 0;
    std::size_t numeric_black = 0, numeric_white = 0;
    std::pair<double, double> winsor_black{0, 0}, winsor_white{0, 0};
    std::pair<double, double> reference{0, 0};
    bool incomplete = false;
    std::string note;
};

inline DisparityReport disparity_report(std::span<const RunRecord> records, std::pair<double, double> reference,
                                        WinsorPercentiles w = {}) {
    DisparityReport rep;
    rep.reference = reference;
    if (!records.empty()) rep.variation = records.front().variation;
    for (const auto& r : records) ++(r.name.group == RaceGroup::black ? rep.records_black : rep.records_white);
    if (rep.records_black == 0 || rep.records_white == 0) throw InputError("disparity_report: records must cover both groups");
    rep.inlier_ratio = inlier_ratio(records, reference);

    const auto black = numeric_values(records, RaceGroup::black);
    const auto white = numeric_values(records, RaceGroup::white);
    rep.numeric_black = black.size();
    rep.numeric_white = white.size();
    if (black.size() < 2 || white.size() < 2) {
        rep.incomplete = true;
        rep.note = "fewer than two numeric answers in a group";
        return rep;
    }
    rep.winsor_black = percentile_bounds(black, w.lo, w.hi);
    rep.winsor_white = percentile_bounds(white, w.lo, w.hi);
    const auto wb = winsorize(black, w.lo, w.hi);
    const auto ww = winsorize(white, w.lo, w.hi);
    try {
        const auto s = smd(wb, ww);
        rep.smd = s.smd;
        rep.pooled_sd = s.pooled_sd;
        const auto raw = smd(black, white);
        rep.smd_raw = raw.smd;
        rep.pooled_sd_raw = raw.pooled_sd;
    } catch (const UndefinedMetricError& e) {
        rep.incomplete = true;
        rep.note = e.what();
    }
    rep.emd = emd(wb, ww);
    return rep;
}

inline void to_json(nlohmann::json& j, const RunRecord& r) {
    j = nlohmann::json{{"name", r.name.full()},
                       {"group", to_string(r.name.group)},
                       {"name_index", r.name_index},
                       {"variation", r.variation},
                       {"repetition", r.repetition},
                       {"seed", r.seed},
                       {"raw_output", r.raw_output},
                       {"numeric_value", r.numeric_value ? nlohmann::json(*r.numeric_value) : nlohmann::json()}};
    if (!r.error.empty()) j["error"] = r.error;
}

/// Newline-delimited JSON, one record per line.
inline void write_records_ndjson(std::ostream& os, std::span<const RunRecord> records) {
    for (const auto& r : records) os << nlohmann::json(r).dump() << '\n';
}

inline void to_json(nlohmann::json& j, const DisparityReport& r) {
    j = nlohmann::json{{"variation", r.variation},
                       {"label", r.label},
                       {"smd", r.smd},
                       {"pooled_sd", r.pooled_sd},
                       {"smd_raw", r.smd_raw},
                       {"pooled_sd_raw", r.pooled_sd_raw},
                       {"emd", r.emd},
                       {"inlier_ratio", r.inlier_ratio},
                       {"records", {{"black", r.records_black}, {"white", r.records_white}}},
                       {"numeric", {{"black", r.numeric_black}, {"white", r.numeric_white}}},
                       {"winsor_bounds", {{"black", {r.winsor_black.first, r.winsor_black.second}},
                                          {"white", {r.winsor_white.first, r.winsor_white.second}}}},
                       {"reference_range", {r.reference.first, r.reference.second}},
                       {"incomplete", r.incomplete}};
    if (!r.note.empty()) j["note"] = r.note;
}

inline constexpr const char* kReportCsvHeader =
    "label,variation,smd,pooled_sd,smd_raw,pooled_sd_raw,emd,inlier_ratio,records_black,records_white,"
    "numeric_black,numeric_white,reference_lo,reference_hi,incomplete";

inline std::string report_csv_row(const DisparityReport& r) {
    std::ostringstream os;
    os << std::setprecision(10) << r.label << ',' << r.variation << ',' << r.smd << ',' << r.pooled_sd << ','
       << r.smd_raw << ',' << r.pooled_sd_raw << ',' << r.emd << ',' << r.inlier_ratio << ',' << r.records_black
       << ',' << r.records_white << ',' << r.numeric_black << ',' << r.numeric_white << ',' << r.reference.first
       << ',' << r.reference.second << ',' << (r.incomplete ? 1 : 0);
    return os.str();
}

} // namespace prunelens
