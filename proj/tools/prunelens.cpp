// SPDX-License-Identifier: Apache-2.0
//
// prunelens: localize group-conditional components of a decoder, prune them,
// and measure the change in output disparity.

#include <CLI11.hpp>

#include <cstdlib>
#include <iostream>
#include <optional>
#include <string>

#include "prunelens/checkpoint_io.hpp"
#include "prunelens/outputs.hpp"
#include "prunelens/scenario_plant.hpp"
#include "prunelens/toy.hpp"

namespace {

using namespace prunelens;

enum Exit { kOk = 0, kConfig = 2, kMismatch = 3, kRuntime = 4 };

std::string default_config() { return std::string(PRUNELENS_DATA_DIR) + "/scenarios.json"; }

// Flags shared by the localize / evaluate / grid-search commands.
struct PlanFlags {
    std::string model;
    std::string config = default_config();
    std::string protocol = "prompt_specific";
    std::string kind = "neurons";
    std::optional<double> tau_min, tau_maj;
    std::size_t reps = 100;
    double temperature = 0.6;
    std::uint64_t seed = 0;
    std::optional<std::size_t> workers;
    std::string out = "prunelens-out";
    std::size_t max_new = 32;
    double winsor_lo = 1.0, winsor_hi = 99.0;
    bool per_variation_range = false;
    bool svg = false;
    std::string sets;
};

void add_model_flags(CLI::App* c, PlanFlags& f) {
    c->add_option("--model", f.model, "PLNS1 checkpoint")->required();
    c->add_option("--config", f.config, "scenario config JSON")->capture_default_str();
    c->add_option("--protocol", f.protocol, "prompt_specific | within_context_loo | cross_context")
        ->capture_default_str();
    c->add_option("--kind", f.kind, "neurons | heads")->capture_default_str();
    c->add_option("--workers", f.workers, "worker threads (default: $PRUNELENS_WORKERS or all cores)");
    c->add_option("--out", f.out, "output directory")->capture_default_str();
}

void add_tau_flags(CLI::App* c, PlanFlags& f) {
    c->add_option("--tau-min", f.tau_min, "minority threshold (default 0.40 neurons, 40 heads)");
    c->add_option("--tau-maj", f.tau_maj, "majority threshold (default 0.35 neurons, 5 heads)");
}

void add_eval_flags(CLI::App* c, PlanFlags& f) {
    c->add_option("--reps", f.reps, "repetitions per prompt")->capture_default_str()->check(CLI::PositiveNumber);
    c->add_option("--temperature", f.temperature, "sampling temperature")->capture_default_str();
    c->add_option("--seed", f.seed, "base seed")->capture_default_str();
    c->add_option("--max-new", f.max_new, "max generated tokens per answer")->capture_default_str();
    c->add_option("--winsor-lo", f.winsor_lo, "lower winsorization percentile")->capture_default_str();
    c->add_option("--winsor-hi", f.winsor_hi, "upper winsorization percentile")->capture_default_str();
    c->add_flag("--per-variation-range", f.per_variation_range,
                "build the inlier reference range per variation instead of pooling the scenario");
    c->add_flag("--svg", f.svg, "also write SVG figures");
}

struct Loaded {
    Checkpoint ckpt;
    ScenarioConfig scenarios;
    std::optional<Tokenizer> tok;
    Protocol protocol = Protocol::prompt_specific;
    Thresholds tau;
    std::size_t workers = 1;
};

Loaded load(const PlanFlags& f) {
    Loaded l;
    l.protocol = parse_protocol(f.protocol);
    l.tau = Thresholds::defaults(parse_kind(f.kind));
    if (f.tau_min) l.tau.tau_min = *f.tau_min;
    if (f.tau_maj) l.tau.tau_maj = *f.tau_maj;
    threshold_count(l.tau.kind, l.tau.tau_min, 1 << 20);
    threshold_count(l.tau.kind, l.tau.tau_maj, 1 << 20);
    l.workers = resolve_workers(f.workers);
    l.scenarios = load_scenarios(f.config);
    l.ckpt = load_checkpoint(f.model);
    l.tok.emplace(l.scenarios, l.ckpt.config.vocab_size);
    return l;
}

EvalSettings eval_settings(const PlanFlags& f, std::size_t workers) {
    if (!(f.temperature > 0.0)) throw ConfigError("--temperature must be > 0");
    EvalSettings s;
    s.battery.reps = f.reps;
    s.battery.temperature = f.temperature;
    s.battery.max_new = f.max_new;
    s.battery.workers = workers;
    s.seed = f.seed;
    s.winsor = {f.winsor_lo, f.winsor_hi};
    s.per_variation_range = f.per_variation_range;
    return s;
}

// The plan as recorded in the manifest; worker count is left out on purpose
// because outputs do not depend on it.
nlohmann::json plan_json(const PlanFlags& f, const Loaded& l, bool with_eval) {
    nlohmann::json j{{"model", f.model},
                     {"config", f.config},
                     {"protocol", to_string(l.protocol)},
                     {"kind", to_string(l.tau.kind)},
                     {"tau_min", l.tau.tau_min},
                     {"tau_maj", l.tau.tau_maj},
                     {"model_config", l.ckpt.config}};
    if (with_eval) {
        j["reps"] = f.reps;
        j["temperature"] = f.temperature;
        j["seed"] = f.seed;
        j["max_new"] = f.max_new;
        j["winsor_percentiles"] = {f.winsor_lo, f.winsor_hi};
        j["reference_range"] = f.per_variation_range ? "per_variation" : "pooled";
    }
    return j;
}

ProtocolSets localize_sets(const Loaded& l) {
    const Scenario& ref = l.scenarios.scenario(l.scenarios.reference_scenario);
    std::vector<VariationScores> reference, others;
    if (l.protocol != Protocol::cross_context) reference = score_scenario(l.ckpt, *l.tok, l.scenarios.names, ref, l.workers);
    else reference.resize(ref.variations.size()); // only the count is read
    if (l.protocol == Protocol::cross_context) {
        for (const Scenario* s : l.scenarios.other_scenarios()) {
            auto v = score_scenario(l.ckpt, *l.tok, l.scenarios.names, *s, l.workers);
            others.insert(others.end(), v.begin(), v.end());
        }
    }
    return build_protocol_sets(l.protocol, reference, others, l.tau);
}

int cmd_localize(const PlanFlags& f) {
    const Loaded l = load(f);
    const auto ps = localize_sets(l);
    const std::string label = run_label(to_string(ps.protocol), l.tau.kind);
    write_protocol_sets(f.out, ps, l.tau.kind);
    update_manifest(f.out, "localize/" + label, plan_json(f, l, false));
    std::cout << "wrote " << ps.pruning.size() << " " << to_string(ps.protocol) << " set(s) to "
              << (fs::path(f.out) / "sets" / label).string() << "\n";
    return kOk;
}

void write_smd_figure(const fs::path& out, const std::string& protocol, const std::vector<DisparityReport>& base,
                      const std::vector<DisparityReport>& pruned) {
    std::vector<std::string> cats;
    svg::Series a{"unpruned", {}}, b{protocol, {}};
    for (std::size_t k = 0; k < base.size(); ++k) {
        cats.push_back(base[k].variation);
        a.values.push_back(base[k].smd);
        b.values.push_back(pruned[k].smd);
    }
    write_file(out / "figures" / ("smd_" + protocol + ".svg"), svg::bar_chart("SMD per variation", cats, {a, b}));
}

int cmd_evaluate(const PlanFlags& f) {
    const Loaded l = load(f);
    const EvalSettings s = eval_settings(f, l.workers);
    const Scenario& ref = l.scenarios.scenario(l.scenarios.reference_scenario);
    const fs::path out = f.out;
    const std::string proto = run_label(to_string(l.protocol), l.tau.kind);
    const fs::path dir = f.sets.empty() ? out / "sets" / proto : fs::path(f.sets);
    const ProtocolSets ps = read_protocol_sets(dir, l.protocol, ref, l.ckpt.config);
    for (const auto& set : ps.pruning)
        if (set.kind != l.tau.kind) throw MismatchError("set kind does not match --kind");

    const Baseline base = run_baseline(l.ckpt, *l.tok, l.scenarios.names, ref, s);
    const ProtocolEvaluation ev = evaluate_protocol(l.ckpt, *l.tok, l.scenarios.names, ref, ps, base, s);
    for (std::size_t k = 0; k < ref.variations.size(); ++k) {
        const std::string id = ref.spec(k).id();
        write_file(out / "records" / "unpruned" / (id + ".ndjson"), records_ndjson(base.records[k]));
        write_file(out / "records" / proto / (id + ".ndjson"), records_ndjson(ev.records[k]));
    }
    std::vector<DisparityReport> all = base.reports;
    all.insert(all.end(), ev.reports.begin(), ev.reports.end());
    write_file(out / "reports" / (proto + ".csv"), reports_csv(all));
    const auto sb = summarize(base.reports), sp = summarize(ev.reports);
    nlohmann::json rj{{"protocol", to_string(l.protocol)},
                      {"kind", to_string(l.tau.kind)},
                      {"unpruned", base.reports},
                      {"pruned", ev.reports},
                      {"summary",
                       {{"unpruned", {{"mean_smd", sb.mean_smd}, {"mean_abs_smd", sb.mean_abs_smd}, {"mean_inlier_ratio", sb.mean_inlier_ratio}}},
                        {"pruned", {{"mean_smd", sp.mean_smd}, {"mean_abs_smd", sp.mean_abs_smd}, {"mean_inlier_ratio", sp.mean_inlier_ratio}}}}}};
    write_file(out / "reports" / (proto + ".json"), rj.dump(2) + "\n");
    std::string fig = "variation,unpruned_smd,pruned_smd,unpruned_inlier,pruned_inlier\n";
    for (std::size_t k = 0; k < ref.variations.size(); ++k) {
        std::ostringstream row;
        row << std::setprecision(10) << base.reports[k].variation << ',' << base.reports[k].smd << ','
            << ev.reports[k].smd << ',' << base.reports[k].inlier_ratio << ',' << ev.reports[k].inlier_ratio << '\n';
        fig += row.str();
    }
    write_file(out / "figures" / ("smd_" + proto + ".csv"), fig);
    if (f.svg) write_smd_figure(out, proto, base.reports, ev.reports);
    auto plan = plan_json(f, l, true);
    plan["sets"] = dir.string();
    update_manifest(out, "evaluate/" + proto, plan);
    std::cout << std::setprecision(4) << "mean SMD unpruned " << sb.mean_smd << " -> " << proto << " " << sp.mean_smd
              << " (mean inlier ratio " << sp.mean_inlier_ratio << ")\n";
    return kOk;
}

int cmd_grid_search(const PlanFlags& f, bool include_zero) {
    const Loaded l = load(f);
    const EvalSettings s = eval_settings(f, l.workers);
    const Scenario& ref = l.scenarios.scenario(l.scenarios.reference_scenario);
    const auto& names = l.scenarios.names;
    const auto reference = score_scenario(l.ckpt, *l.tok, names, ref, l.workers);
    std::vector<VariationScores> others;
    if (l.protocol == Protocol::cross_context)
        for (const Scenario* sc : l.scenarios.other_scenarios()) {
            auto v = score_scenario(l.ckpt, *l.tok, names, *sc, l.workers);
            others.insert(others.end(), v.begin(), v.end());
        }
    const Baseline base = run_baseline(l.ckpt, *l.tok, names, ref, s);
    std::ostringstream csv;
    csv << std::setprecision(10) << "tau_min,tau_maj,mean_smd,mean_abs_smd,mean_inlier_ratio,mean_set_size,complete\n";
    for (const auto& t : tau_grid(l.tau.kind, include_zero)) {
        const auto ps = build_protocol_sets(l.protocol, reference, others, t);
        const auto ev = evaluate_protocol(l.ckpt, *l.tok, names, ref, ps, base, s);
        const auto sm = summarize(ev.reports);
        double size = 0.0;
        for (std::size_t k : ps.set_for_variation) size += static_cast<double>(ps.pruning[k].components.size());
        csv << t.tau_min << ',' << t.tau_maj << ',' << sm.mean_smd << ',' << sm.mean_abs_smd << ','
            << sm.mean_inlier_ratio << ',' << size / static_cast<double>(ps.set_for_variation.size()) << ','
            << sm.complete << '\n';
    }
    const std::string name = "grid_" + to_string(l.protocol) + "_" + std::string(to_string(l.tau.kind)) + ".csv";
    write_file(fs::path(f.out) / "reports" / name, csv.str());
    auto plan = plan_json(f, l, true);
    plan["include_zero"] = include_zero;
    update_manifest(f.out, "grid-search/" + run_label(to_string(l.protocol), l.tau.kind), plan);
    std::cout << "wrote " << (fs::path(f.out) / "reports" / name).string() << "\n";
    return kOk;
}

int cmd_overlap(const std::vector<std::string>& files, const std::string& out, bool svg_out) {
    std::vector<BiasedSet> sets;
    for (const auto& p : files) sets.push_back(load_set(p));
    for (const auto& s : sets)
        if (s.kind != sets.front().kind) throw ConfigError("overlap: set files mix neuron and head sets");
    const auto cells = overlap_matrix(sets);
    write_file(out, overlap_csv(cells));
    if (svg_out) {
        std::vector<std::string> labels;
        for (const auto& s : sets) labels.push_back(s.variation);
        std::vector<std::vector<double>> v(sets.size(), std::vector<double>(sets.size()));
        for (std::size_t i = 0; i < cells.size(); ++i)
            v[i / sets.size()][i % sets.size()] = cells[i].fraction.value_or(std::nan(""));
        fs::path svg_path = out;
        svg_path.replace_extension(".svg");
        write_file(svg_path, svg::heatmap("Overlap of pruned sets (row-normalized)", labels, labels, v));
    }
    std::cout << "wrote " << out << "\n";
    return kOk;
}

int cmd_layer_distribution(const std::string& set_path, const std::string& model, const std::string& out, bool svg_out) {
    const Checkpoint ck = load_checkpoint(model);
    const BiasedSet set = load_set(set_path, &ck.config);
    if (set.kind != ComponentKind::neurons) throw ConfigError("layer-distribution needs a neuron set");
    const auto d = layer_distribution(set, ck.config);
    const fs::path dir = out;
    write_file(dir / "layer_cells.csv", layer_cells_csv(d, ck.config));
    write_file(dir / "layer_share.csv", layer_share_csv(d));
    if (svg_out) {
        std::vector<std::string> rows, cols;
        std::vector<std::vector<double>> v;
        for (Sub s : kAllSubs) cols.emplace_back(to_string(s));
        for (std::size_t l = 0; l < d.cell.size(); ++l) {
            rows.push_back("layer " + std::to_string(l));
            v.emplace_back(d.cell[l].begin(), d.cell[l].end());
        }
        write_file(dir / "layer_cells.svg", svg::heatmap("Pruned share per location", rows, cols, v));
    }
    std::cout << "wrote " << (dir / "layer_cells.csv").string() << "\n";
    return kOk;
}

int run(int argc, char** argv) {
    CLI::App app{"prunelens: localize and prune group-conditional components of a decoder"};
    app.require_subcommand(1);

    std::uint64_t toy_seed = 0;
    std::string toy_out, toy_cfg;
    auto* make_toy = app.add_subcommand("make-toy", "write a random toy checkpoint");
    make_toy->add_option("--seed", toy_seed, "weight seed")->capture_default_str();
    make_toy->add_option("--model-config", toy_cfg, "model config JSON (default: desk config)");
    make_toy->add_option("--out", toy_out, "output checkpoint path")->required();

    std::string plant_model, plant_out, plant_preset = "single", plant_config = default_config();
    double strength = -3.0;
    std::size_t plant_neurons = 20;
    std::uint64_t calibration_seed = 0x5eed;
    auto* plant = app.add_subcommand("plant-bias", "plant a minority-name bias into a toy checkpoint");
    plant->add_option("--model", plant_model, "input checkpoint")->required();
    plant->add_option("--config", plant_config, "scenario config JSON")->capture_default_str();
    plant->add_option("--strength", strength, "designated-logit shift (negative lowers minority answers)")
        ->capture_default_str();
    plant->add_option("--preset", plant_preset, "single | contexts")->capture_default_str();
    plant->add_option("--neurons", plant_neurons, "planted neurons for the single preset")->capture_default_str();
    plant->add_option("--seed", calibration_seed, "calibration prompt seed")->capture_default_str();
    plant->add_option("--out", plant_out, "output checkpoint path")->required();

    PlanFlags loc;
    auto* localize = app.add_subcommand("localize", "score components and write biased sets");
    add_model_flags(localize, loc);
    add_tau_flags(localize, loc);

    PlanFlags ev;
    auto* evaluate = app.add_subcommand("evaluate", "prune protocol sets and report disparity");
    add_model_flags(evaluate, ev);
    add_tau_flags(evaluate, ev);
    add_eval_flags(evaluate, ev);
    evaluate->add_option("--sets", ev.sets, "set directory (default: <out>/sets/<protocol>)");

    PlanFlags grid;
    bool include_zero = false;
    auto* grid_cmd = app.add_subcommand("grid-search", "sweep the threshold grid");
    add_model_flags(grid_cmd, grid);
    add_eval_flags(grid_cmd, grid);
    grid_cmd->add_flag("--include-zero", include_zero, "start both threshold ranges at zero (66 cells)");

    std::vector<std::string> overlap_sets;
    std::string overlap_out;
    bool overlap_svg = false;
    auto* overlap = app.add_subcommand("overlap", "row-normalized intersection matrix of set files");
    overlap->add_option("sets", overlap_sets, "set files")->required()->expected(2, -1);
    overlap->add_option("--out", overlap_out, "output CSV path")->required();
    overlap->add_flag("--svg", overlap_svg, "also write an SVG heatmap");

    std::string dist_set, dist_model, dist_out;
    bool dist_svg = false;
    auto* dist = app.add_subcommand("layer-distribution", "where a neuron set sits across layers and subcomponents");
    dist->add_option("--set", dist_set, "neuron set file")->required();
    dist->add_option("--model", dist_model, "checkpoint the set belongs to")->required();
    dist->add_option("--out", dist_out, "output directory")->required();
    dist->add_flag("--svg", dist_svg, "also write an SVG heatmap");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? kOk : kConfig;
    }

    try {
        if (*make_toy) {
            ModelConfig cfg = ModelConfig::desk();
            if (!toy_cfg.empty()) cfg = nlohmann::json::parse(read_file(toy_cfg)).get<ModelConfig>();
            save_checkpoint(make_toy_model(cfg, toy_seed), toy_out);
            std::cout << "wrote " << toy_out << "\n";
        } else if (*plant) {
            const Checkpoint base = load_checkpoint(plant_model);
            const ScenarioConfig sc = load_scenarios(plant_config);
            const Tokenizer tok(sc, base.config.vocab_size);
            PlantSpec spec = scenario_plant_spec(base.config, tok, sc, parse_plant_preset(plant_preset), strength,
                                                 plant_neurons);
            spec.calibration_seed = calibration_seed;
            save_checkpoint(plant_bias(base, spec), plant_out);
            BiasedSet planted{ComponentKind::neurons, 0, 0, "planted", planted_components(spec)};
            save_set(plant_out + ".planted.json", planted);
            std::cout << "wrote " << plant_out << " (" << planted.components.size() << " planted neurons)\n";
        } else if (*localize) {
            return cmd_localize(loc);
        } else if (*evaluate) {
            return cmd_evaluate(ev);
        } else if (*grid_cmd) {
            return cmd_grid_search(grid, include_zero);
        } else if (*overlap) {
            return cmd_overlap(overlap_sets, overlap_out, overlap_svg);
        } else if (*dist) {
            return cmd_layer_distribution(dist_set, dist_model, dist_out, dist_svg);
        }
    } catch (const MismatchError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kMismatch;
    } catch (const ConfigError& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return kConfig;
    } catch (const LoadError& e) {
        std::cerr << "load error: " << e.what() << "\n";
        return kConfig;
    } catch (const InputError& e) {
        std::cerr << "invalid input: " << e.what() << "\n";
        return kConfig;
    } catch (const nlohmann::json::exception& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return kConfig;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kRuntime;
    }
    return kOk;
}

} // namespace

int main(int argc, char** argv) { return run(argc, argv); }
