#include "advimmune/harness.hpp"

#include <CLI11.hpp>
#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>

namespace advimmune {

namespace fs = std::filesystem;
using nlohmann::json;

ExperimentConfig ExperimentConfig::from_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open config: " + path);
    ExperimentConfig cfg;
    try {
        in >> cfg.j;
    } catch (const json::exception& e) {
        throw ConfigError(path + ": " + e.what());
    }
    if (!cfg.j.is_object()) throw ConfigError(path + ": config must be a JSON object");
    return cfg;
}

ExperimentConfig ExperimentConfig::from_json(const json& j) {
    ExperimentConfig cfg;
    cfg.j = j;
    return cfg;
}

std::string ExperimentConfig::str(const std::string& key, const std::string& fallback) const {
    if (!j.contains(key)) return fallback;
    if (!j.at(key).is_string()) throw ConfigError("config key '" + key + "' must be a string");
    return j.at(key).get<std::string>();
}

double ExperimentConfig::num(const std::string& key, double fallback) const {
    if (!j.contains(key)) return fallback;
    if (!j.at(key).is_number()) throw ConfigError("config key '" + key + "' must be a number");
    return j.at(key).get<double>();
}

long long ExperimentConfig::integer(const std::string& key, long long fallback) const {
    if (!j.contains(key)) return fallback;
    if (!j.at(key).is_number_integer())
        throw ConfigError("config key '" + key + "' must be an integer");
    return j.at(key).get<long long>();
}

bool ExperimentConfig::flag(const std::string& key, bool fallback) const {
    if (!j.contains(key)) return fallback;
    if (!j.at(key).is_boolean()) throw ConfigError("config key '" + key + "' must be a boolean");
    return j.at(key).get<bool>();
}

void ExperimentConfig::resolve_defaults() {
    if (!j.contains("scenario")) j["scenario"] = "remove-only";
    parse_scenario(str("scenario"));
    Scenario sc = parse_scenario(str("scenario"));

    if (!j.contains("alpha")) j["alpha"] = 0.85;
    double alpha = num("alpha", 0.85);
    if (!(alpha > 0 && alpha < 1)) throw ConfigError("alpha must lie in (0,1)");

    if (!j.contains("threads")) j["threads"] = 1;
    if (!j.contains("seed")) j["seed"] = 0;
    if (!j.contains("attack_local_budget"))
        j["attack_local_budget"] = sc == Scenario::RemoveOnly ? "degree" : "max-deg-minus-6";
    if (!j.contains("immune_local_budget"))
        j["immune_local_budget"] = sc == Scenario::RemoveOnly ? "degree" : "none";
    if (!j.contains("remove_add_offset")) j["remove_add_offset"] = 6;
    if (!j.contains("symmetric_immunization")) j["symmetric_immunization"] = false;
    if (!j.contains("p_connected")) j["p_connected"] = 0.3;
    if (!j.contains("bridgeness_multiset")) j["bridgeness_multiset"] = false;
    if (!j.contains("eval_mode")) j["eval_mode"] = "per-node-pair";
    if (!j.contains("seeds")) j["seeds"] = json::array({0, 1, 2, 3, 4, 5, 6, 7, 8, 9});
    if (j.contains("immune_budget") && j.contains("immune_budget_fraction"))
        throw ConfigError("set either immune_budget or immune_budget_fraction, not both");

    std::string albr = str("attack_local_budget");
    if (albr != "degree" && albr != "max-deg-minus-6")
        throw ConfigError("attack_local_budget must be degree or max-deg-minus-6");
    std::string ilbr = str("immune_local_budget");
    if (ilbr != "degree" && ilbr != "none")
        throw ConfigError("immune_local_budget must be degree or none");
}

std::string ExperimentConfig::hash_hex() const {
    std::uint64_t h = fnv1a(j.dump());
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(h));
    return buf;
}

std::string ExperimentConfig::header_comment() const {
    return "config_hash=" + hash_hex() + " seed=" + std::to_string(integer("seed", 0)) +
           " version=" + kVersion;
}

Dataset load_dataset(const ExperimentConfig& cfg, bool need_logits) {
    std::string edges = cfg.str("edges");
    if (edges.empty()) throw ConfigError("config needs an 'edges' path");

    Dataset d;
    Graph raw = load_edge_list(edges);
    if (raw.duplicate_edges > 0)
        std::fprintf(stderr, "warning: %d duplicate edges deduplicated in %s\n",
                     raw.duplicate_edges, edges.c_str());
    d.g = largest_connected_component(raw);

    if (!cfg.str("labels").empty()) load_labels(d.g, cfg.str("labels"));
    if (!cfg.str("features").empty()) load_features(d.g, cfg.str("features"));

    if (!need_logits) return d;

    if (!cfg.str("logits").empty()) {
        d.h = load_logits(cfg.str("logits"), d.g.num_nodes);
    } else {
        if (d.g.features.size() == 0 || d.g.labels.empty())
            throw ConfigError("no logits file given; training needs features and labels");
        TrainConfig tc;
        if (cfg.j.contains("train")) {
            ExperimentConfig sub = ExperimentConfig::from_json(cfg.j.at("train"));
            tc.learning_rate = sub.num("learning_rate", tc.learning_rate);
            tc.epochs = static_cast<int>(sub.integer("epochs", tc.epochs));
            tc.l2 = sub.num("l2", tc.l2);
            tc.train_fraction = sub.num("train_fraction", tc.train_fraction);
            tc.val_fraction = sub.num("val_fraction", tc.val_fraction);
            tc.seed = static_cast<std::uint64_t>(sub.integer("seed", 0));
        }
        d.splits = make_splits(d.g.labels, tc);
        d.has_splits = true;
        TrainResult tr = train_linear(d.g.features, d.g.labels, d.splits.train,
                                      d.g.num_classes, tc);
        d.h = std::move(tr.h);
    }
    return d;
}

AttackSpec attack_spec_from_config(const ExperimentConfig& cfg, const Graph& g) {
    Scenario sc = parse_scenario(cfg.str("scenario"));
    auto mst = minimum_spanning_tree(g);
    int offset = static_cast<int>(cfg.integer("remove_add_offset", 6));
    AttackSpec spec = build_attack_spec(g, sc, mst, offset);

    std::string rule = cfg.str("attack_local_budget");
    bool degree_rule = rule == "degree";
    bool default_rule = (sc == Scenario::RemoveOnly) == degree_rule;
    if (!default_rule) {
        for (int i = 0; i < g.num_nodes; ++i)
            spec.local_budget[i] =
                degree_rule ? g.degrees[i] : std::max(g.degrees[i] - offset, 0);
    }
    return spec;
}

long long immune_budget_from_fraction(double fraction, const Graph& g, Scenario scenario) {
    if (fraction < 0) throw ConfigError("immune budget fraction must be non-negative");
    double base = scenario == Scenario::RemoveOnly
                      ? static_cast<double>(g.num_directed_edges() / 2)
                      : static_cast<double>(g.num_nodes) * (g.num_nodes - 1) / 2.0;
    return static_cast<long long>(std::floor(fraction * base));
}

long long resolve_immune_budget(const ExperimentConfig& cfg, const Graph& g,
                                Scenario scenario) {
    if (cfg.has("immune_budget_fraction"))
        return immune_budget_from_fraction(cfg.num("immune_budget_fraction", 0), g, scenario);
    long long c = cfg.integer("immune_budget", 0);
    if (c < 0) throw ConfigError("immune budget must be non-negative");
    return c;
}

std::vector<int> resolve_immune_local_budget(const ExperimentConfig& cfg, const Graph& g) {
    if (cfg.str("immune_local_budget") == "none") return {};
    return g.degrees;
}

namespace {

std::string fmt17(double v) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

void ensure_out_dir(const ExperimentConfig& cfg) {
    std::string out = cfg.str("out");
    if (out.empty()) throw ConfigError("config needs an 'out' directory");
    fs::create_directories(out);
}

std::string out_path(const ExperimentConfig& cfg, const std::string& name) {
    return (fs::path(cfg.str("out")) / name).string();
}

void write_json(const std::string& path, json j) {
    std::ofstream out(path);
    if (!out) throw ConfigError("cannot write " + path);
    out << j.dump(2) << "\n";
}

void write_certificates(const std::string& path, const std::vector<MarginReport>& reports,
                        const std::vector<long long>& ids, const std::string& header) {
    std::ofstream out(path);
    if (!out) throw ConfigError("cannot write " + path);
    out << "# " << header << "\n";
    out << "node,label_class,worst_class,worst_margin,robust\n";
    for (const MarginReport& r : reports)
        out << ids[r.node] << "," << r.label_class << "," << r.worst_class << ","
            << fmt17(r.worst_margin) << "," << (r.robust ? 1 : 0) << "\n";
}

void write_deltas(const std::string& path, const DeltasMap& deltas,
                  const std::vector<long long>& ids, const std::string& header) {
    std::ofstream out(path);
    if (!out) throw ConfigError("cannot write " + path);
    out << "# " << header << "\n";
    out << "y,k,src,dst,sign\n";
    for (const auto& [pair, delta] : deltas)
        for (const DeltaEntry& e : delta.entries)
            out << pair.first << "," << pair.second << "," << ids[e.src] << "," << ids[e.dst]
                << "," << e.sign << "\n";
}

json base_record(const ExperimentConfig& cfg) {
    json j;
    j["config_hash"] = cfg.hash_hex();
    j["seed"] = cfg.integer("seed", 0);
    j["version"] = kVersion;
    return j;
}

std::vector<std::uint64_t> seed_list(const ExperimentConfig& cfg) {
    std::vector<std::uint64_t> seeds;
    if (!cfg.j.contains("seeds")) return {0};
    for (const auto& s : cfg.j.at("seeds")) {
        if (!s.is_number_integer()) throw ConfigError("seeds must be integers");
        seeds.push_back(s.get<std::uint64_t>());
    }
    if (seeds.empty()) throw ConfigError("seeds list is empty");
    return seeds;
}

double mean_of(const std::vector<double>& v) {
    double s = 0;
    for (double x : v) s += x;
    return s / static_cast<double>(v.size());
}

double std_of(const std::vector<double>& v) {
    double m = mean_of(v);
    double s = 0;
    for (double x : v) s += (x - m) * (x - m);
    return std::sqrt(s / static_cast<double>(v.size()));
}

ImmuneMask prefix_mask(const ImmuneMask& full, long long budget) {
    ImmuneMask out(full.num_nodes);
    for (const Selection& s : full.trace) {
        if (out.zero_count() >= budget) break;
        out.immunize(s.src, s.dst, s.round, s.value);
    }
    return out;
}

}  // namespace

int cmd_certify(const ExperimentConfig& cfg) {
    ensure_out_dir(cfg);
    Dataset d = load_dataset(cfg);
    AttackSpec spec = attack_spec_from_config(cfg, d.g);
    double alpha = cfg.num("alpha", 0.85);
    int threads = static_cast<int>(cfg.integer("threads", 1));

    CertifyResult res = certify(d.g, d.h, spec, alpha, nullptr, threads);

    std::string header = cfg.header_comment();
    save_id_map(d.g, out_path(cfg, "id_map.csv"), header);
    write_certificates(out_path(cfg, "certificates.csv"), res.reports, d.g.original_ids,
                       header);
    write_deltas(out_path(cfg, "deltas.csv"), res.deltas, d.g.original_ids, header);

    json summary = base_record(cfg);
    summary["method"] = "none";
    summary["scenario"] = scenario_name(spec.scenario);
    summary["alpha"] = alpha;
    summary["num_nodes"] = d.g.num_nodes;
    summary["num_edges"] = d.g.num_directed_edges() / 2;
    summary["robust_ratio"] = res.robust_ratio;
    summary["mean_worst_margin"] = res.mean_worst_margin;
    if (!d.g.labels.empty())
        summary["clean_accuracy"] = accuracy(res.predictions, d.g.labels, {});
    write_json(out_path(cfg, "summary.json"), summary);
    return 0;
}

int cmd_immunize(const ExperimentConfig& cfg) {
    ensure_out_dir(cfg);
    Dataset d = load_dataset(cfg);
    AttackSpec spec = attack_spec_from_config(cfg, d.g);
    double alpha = cfg.num("alpha", 0.85);
    int threads = static_cast<int>(cfg.integer("threads", 1));
    Scenario sc = spec.scenario;

    CertifyResult clean = certify(d.g, d.h, spec, alpha, nullptr, threads);

    GreedyOptions opt;
    opt.global_budget = resolve_immune_budget(cfg, d.g, sc);
    opt.local_budget = resolve_immune_local_budget(cfg, d.g);
    opt.symmetric = cfg.flag("symmetric_immunization", false);
    opt.threads = threads;

    ImmuneMask mask = greedy_immunize(d.g, d.h, spec, alpha, opt, clean.deltas,
                                      clean.predictions);
    EvalMetrics metrics = evaluate_immunization(d.g, d.h, spec, alpha, mask, threads);

    std::string header = cfg.header_comment();
    save_id_map(d.g, out_path(cfg, "id_map.csv"), header);
    save_mask(mask, out_path(cfg, "mask.csv"), d.g.original_ids, header);
    write_deltas(out_path(cfg, "deltas.csv"), clean.deltas, d.g.original_ids, header);
    write_certificates(out_path(cfg, "certificates_after.csv"), metrics.reports,
                       d.g.original_ids, header);

    json mj = base_record(cfg);
    mj["method"] = "advimmune";
    mj["scenario"] = scenario_name(sc);
    mj["alpha"] = alpha;
    mj["robust_ratio"] = metrics.robust_ratio;
    mj["mean_worst_margin"] = metrics.mean_worst_margin;
    mj["budget_used"] = metrics.budget_used;
    mj["budget"] = opt.global_budget;
    mj["no_defense_robust_ratio"] = clean.robust_ratio;
    mj["no_defense_mean_worst_margin"] = clean.mean_worst_margin;
    if (!d.g.labels.empty())
        mj["clean_accuracy"] = accuracy(clean.predictions, d.g.labels, {});
    write_json(out_path(cfg, "metrics.json"), mj);

    if (cfg.j.contains("sweep")) {
        std::ofstream out(out_path(cfg, "sweep_metrics.csv"));
        if (!out) throw ConfigError("cannot write sweep_metrics.csv");
        out << "# " << header << "\n";
        out << "fraction,budget,robust_ratio,mean_worst_margin\n";
        for (const auto& f : cfg.j.at("sweep")) {
            if (!f.is_number()) throw ConfigError("sweep entries must be numbers");
            double frac = f.get<double>();
            long long c = immune_budget_from_fraction(frac, d.g, sc);
            c = std::min(c, mask.zero_count());
            ImmuneMask pm = prefix_mask(mask, c);
            EvalMetrics em = evaluate_immunization(d.g, d.h, spec, alpha, pm, threads);
            out << fmt17(frac) << "," << c << "," << fmt17(em.robust_ratio) << ","
                << fmt17(em.mean_worst_margin) << "\n";
        }
    }
    return 0;
}

int cmd_baseline(const ExperimentConfig& cfg) {
    ensure_out_dir(cfg);
    Dataset d = load_dataset(cfg);
    AttackSpec spec = attack_spec_from_config(cfg, d.g);
    double alpha = cfg.num("alpha", 0.85);
    int threads = static_cast<int>(cfg.integer("threads", 1));

    std::string method_name = cfg.str("method");
    if (method_name.empty()) throw ConfigError("config needs a 'method'");
    BaselineMethod method = parse_baseline(method_name);

    CertifyResult clean = certify(d.g, d.h, spec, alpha, nullptr, threads);

    BaselineConfig bc;
    bc.method = method;
    bc.global_budget = resolve_immune_budget(cfg, d.g, spec.scenario);
    bc.local_budget = resolve_immune_local_budget(cfg, d.g);
    bc.p_connected = cfg.num("p_connected", 0.3);
    bc.bridgeness_multiset = cfg.flag("bridgeness_multiset", false);

    bool randomized = method == BaselineMethod::Random || method == BaselineMethod::AttackRandom;
    std::vector<std::uint64_t> seeds = seed_list(cfg);
    if (!randomized) seeds.resize(1);

    std::string header = cfg.header_comment();
    std::ofstream masks_out(out_path(cfg, "masks.csv"));
    if (!masks_out) throw ConfigError("cannot write masks.csv");
    masks_out << "# " << header << "\n";
    masks_out << "method,seed,round,src,dst,value\n";

    std::vector<double> ratios, margins;
    json per_seed = json::array();
    for (std::uint64_t seed : seeds) {
        bc.seed = seed;
        ImmuneMask mask = select_baseline(bc, d.g, spec, &clean.deltas);
        mask.validate_budgets(bc.global_budget, bc.local_budget);
        EvalMetrics em = evaluate_immunization(d.g, d.h, spec, alpha, mask, threads);
        for (const Selection& s : mask.trace)
            masks_out << method_name << "," << seed << "," << s.round << ","
                      << d.g.original_ids[s.src] << "," << d.g.original_ids[s.dst] << ","
                      << fmt17(s.value) << "\n";
        ratios.push_back(em.robust_ratio);
        margins.push_back(em.mean_worst_margin);
        json rec;
        rec["seed"] = seed;
        rec["robust_ratio"] = em.robust_ratio;
        rec["mean_worst_margin"] = em.mean_worst_margin;
        rec["budget_used"] = em.budget_used;
        per_seed.push_back(rec);
    }

    json mj = base_record(cfg);
    mj["method"] = method_name;
    mj["scenario"] = scenario_name(spec.scenario);
    mj["alpha"] = alpha;
    mj["budget"] = bc.global_budget;
    mj["per_seed"] = per_seed;
    mj["robust_ratio_mean"] = mean_of(ratios);
    mj["robust_ratio_std"] = std_of(ratios);
    mj["mean_worst_margin_mean"] = mean_of(margins);
    mj["mean_worst_margin_std"] = std_of(margins);
    mj["robust_ratio"] = mean_of(ratios);
    mj["mean_worst_margin"] = mean_of(margins);
    mj["no_defense_robust_ratio"] = clean.robust_ratio;
    mj["no_defense_mean_worst_margin"] = clean.mean_worst_margin;
    write_json(out_path(cfg, "metrics.json"), mj);
    return 0;
}

int cmd_analyze(const ExperimentConfig& cfg) {
    ensure_out_dir(cfg);
    Dataset d = load_dataset(cfg, false);
    std::string mask_path = cfg.str("mask");
    if (mask_path.empty()) throw ConfigError("config needs a 'mask' path");
    ImmuneMask mask = load_mask(mask_path, d.g.num_nodes, d.g.original_ids);

    std::vector<std::pair<int, int>> all_edges;
    for (int i = 0; i < d.g.num_nodes; ++i)
        for (int j : d.g.adj[i]) all_edges.emplace_back(i, j);
    std::vector<std::pair<int, int>> immune_edges;
    long long immune_nonedges = 0;
    for (const auto& z : mask.zeros) {
        if (d.g.has_edge(z.first, z.second))
            immune_edges.push_back(z);
        else
            ++immune_nonedges;
    }

    std::string header = cfg.header_comment();
    auto write_hist = [&](const std::string& name, const std::vector<double>& all_scores,
                          const std::vector<double>& immune_scores) {
        double lo = 0, hi = 1;
        if (!all_scores.empty()) {
            lo = *std::min_element(all_scores.begin(), all_scores.end());
            hi = *std::max_element(all_scores.begin(), all_scores.end());
        }
        if (hi <= lo) hi = lo + 1;
        const int bins = 20;
        std::vector<long long> all_counts(bins, 0), immune_counts(bins, 0);
        auto bin_of = [&](double v) {
            int b = static_cast<int>((v - lo) / (hi - lo) * bins);
            return std::clamp(b, 0, bins - 1);
        };
        for (double v : all_scores) ++all_counts[bin_of(v)];
        for (double v : immune_scores) ++immune_counts[bin_of(v)];
        std::ofstream out(out_path(cfg, name));
        if (!out) throw ConfigError("cannot write " + name);
        out << "# " << header << "\n";
        out << "bin_lo,bin_hi,immune_count,all_count\n";
        for (int b = 0; b < bins; ++b) {
            double blo = lo + (hi - lo) * b / bins;
            double bhi = lo + (hi - lo) * (b + 1) / bins;
            out << fmt17(blo) << "," << fmt17(bhi) << "," << immune_counts[b] << ","
                << all_counts[b] << "\n";
        }
    };

    json summary = base_record(cfg);
    summary["num_edges"] = static_cast<long long>(all_edges.size()) / 2;
    summary["num_immune_edges"] = static_cast<long long>(immune_edges.size());
    summary["num_immune_nonedges"] = immune_nonedges;

    {
        auto bw = edge_betweenness(d.g);
        auto score_of = [&](const std::pair<int, int>& e) {
            auto key = std::minmax(e.first, e.second);
            return bw.at({key.first, key.second});
        };
        std::vector<double> all_scores, immune_scores;
        for (const auto& e : all_edges) all_scores.push_back(score_of(e));
        for (const auto& e : immune_edges) immune_scores.push_back(score_of(e));
        write_hist("analyze_betweenness.csv", all_scores, immune_scores);
        if (!all_scores.empty()) summary["mean_betweenness_all"] = mean_of(all_scores);
        if (!immune_scores.empty())
            summary["mean_betweenness_immune"] = mean_of(immune_scores);
    }

    if (d.g.features.size() > 0) {
        auto cos = [&](const std::pair<int, int>& e) {
            double dot = d.g.features.row(e.first).dot(d.g.features.row(e.second));
            double na = d.g.features.row(e.first).norm();
            double nb = d.g.features.row(e.second).norm();
            return (na > 0 && nb > 0) ? dot / (na * nb) : 0.0;
        };
        std::vector<double> all_scores, immune_scores;
        for (const auto& e : all_edges) all_scores.push_back(cos(e));
        for (const auto& e : immune_edges) immune_scores.push_back(cos(e));
        write_hist("analyze_similarity.csv", all_scores, immune_scores);
        if (!all_scores.empty()) summary["mean_similarity_all"] = mean_of(all_scores);
        if (!immune_scores.empty()) summary["mean_similarity_immune"] = mean_of(immune_scores);
    }

    if (!d.g.labels.empty()) {
        auto same = [&](const std::pair<int, int>& e) {
            return d.g.labels[e.first] >= 0 && d.g.labels[e.first] == d.g.labels[e.second]
                       ? 1.0
                       : 0.0;
        };
        std::vector<double> all_scores, immune_scores;
        for (const auto& e : all_edges) all_scores.push_back(same(e));
        for (const auto& e : immune_edges) immune_scores.push_back(same(e));
        write_hist("analyze_labels.csv", all_scores, immune_scores);
        if (!all_scores.empty()) summary["same_label_fraction_all"] = mean_of(all_scores);
        if (!immune_scores.empty())
            summary["same_label_fraction_immune"] = mean_of(immune_scores);
    }

    write_json(out_path(cfg, "analyze_summary.json"), summary);
    return 0;
}

int cmd_report(const ExperimentConfig& cfg) {
    std::string runs = cfg.str("runs");
    if (runs.empty()) runs = cfg.str("out");
    if (runs.empty()) throw ConfigError("config needs a 'runs' directory");
    if (!fs::is_directory(runs)) throw ConfigError("not a directory: " + runs);
    std::string outdir = cfg.str("out").empty() ? runs : cfg.str("out");
    fs::create_directories(outdir);

    struct Row {
        std::string run, method, scenario;
        double robust_ratio = 0, mean_worst_margin = 0;
        bool complete = false;
    };
    std::vector<Row> rows;
    std::vector<std::string> dirs;
    for (const auto& entry : fs::directory_iterator(runs))
        if (entry.is_directory()) dirs.push_back(entry.path().filename().string());
    std::sort(dirs.begin(), dirs.end());

    for (const std::string& name : dirs) {
        Row row;
        row.run = name;
        fs::path dir = fs::path(runs) / name;
        fs::path metrics = dir / "metrics.json";
        fs::path summary = dir / "summary.json";
        fs::path file = fs::exists(metrics) ? metrics : summary;
        if (fs::exists(file)) {
            try {
                json j;
                std::ifstream in(file);
                in >> j;
                row.method = j.value("method", "");
                row.scenario = j.value("scenario", "");
                if (j.contains("robust_ratio_mean"))
                    row.robust_ratio = j.at("robust_ratio_mean").get<double>();
                else
                    row.robust_ratio = j.at("robust_ratio").get<double>();
                if (j.contains("mean_worst_margin_mean"))
                    row.mean_worst_margin = j.at("mean_worst_margin_mean").get<double>();
                else
                    row.mean_worst_margin = j.at("mean_worst_margin").get<double>();
                row.complete = true;
            } catch (const json::exception&) {
                row.complete = false;
            }
        }
        rows.push_back(row);
    }

    double base = -1;
    for (const Row& r : rows)
        if (r.complete && r.method == "none") base = r.robust_ratio;

    std::string header = cfg.header_comment();
    std::ofstream csv((fs::path(outdir) / "report.csv").string());
    if (!csv) throw ConfigError("cannot write report.csv");
    csv << "# " << header << "\n";
    csv << "run,method,scenario,robust_ratio,mean_worst_margin,improvement\n";

    std::ostringstream txt;
    txt << "run                      method          scenario     robust  improvement\n";
    char line[160];
    for (const Row& r : rows) {
        if (!r.complete) {
            csv << r.run << ",INCOMPLETE,,,,\n";
            std::snprintf(line, sizeof(line), "%-24s INCOMPLETE\n", r.run.c_str());
            txt << line;
            continue;
        }
        std::string improvement;
        if (base > 0 && r.method != "none") {
            double imp = (r.robust_ratio - base) / base;
            char buf[32];
            std::snprintf(buf, sizeof(buf), "%.4f", imp);
            improvement = buf;
        }
        csv << r.run << "," << r.method << "," << r.scenario << "," << fmt17(r.robust_ratio)
            << "," << fmt17(r.mean_worst_margin) << "," << improvement << "\n";
        std::snprintf(line, sizeof(line), "%-24s %-15s %-12s %.4f  %s\n", r.run.c_str(),
                      r.method.c_str(), r.scenario.c_str(), r.robust_ratio,
                      improvement.empty() ? "-" : improvement.c_str());
        txt << line;
    }
    std::ofstream txt_out((fs::path(outdir) / "report.txt").string());
    if (!txt_out) throw ConfigError("cannot write report.txt");
    txt_out << "# " << header << "\n" << txt.str();
    return 0;
}

int cmd_synth(const ExperimentConfig& cfg) {
    ensure_out_dir(cfg);
    if (!cfg.j.contains("synth")) throw ConfigError("config needs a 'synth' object");
    ExperimentConfig sp = ExperimentConfig::from_json(cfg.j.at("synth"));

    int n = static_cast<int>(sp.integer("n", 0));
    int blocks = static_cast<int>(sp.integer("blocks", 2));
    double p_in = sp.num("p_in", 0.05);
    double p_out = sp.num("p_out", 0.005);
    std::uint64_t seed = static_cast<std::uint64_t>(sp.integer("seed", 0));
    int bits = static_cast<int>(sp.integer("bits_per_class", 8));
    double flip = sp.num("flip_prob", 0.05);
    if (n <= 1) throw ConfigError("synth.n must exceed 1");

    Graph g = generate_planted_partition(n, blocks, p_in, p_out, seed);
    Eigen::MatrixXd x = synth_block_features(g.labels, blocks, bits, flip, seed + 1);

    std::string header = cfg.header_comment();
    {
        std::ofstream out(out_path(cfg, "edges.tsv"));
        if (!out) throw ConfigError("cannot write edges.tsv");
        for (int i = 0; i < g.num_nodes; ++i)
            for (int j : g.adj[i])
                if (i < j) out << i << "\t" << j << "\n";
    }
    {
        std::ofstream out(out_path(cfg, "labels.csv"));
        if (!out) throw ConfigError("cannot write labels.csv");
        out << "# " << header << "\n";
        out << "node_id,label\n";
        for (int i = 0; i < n; ++i) out << i << "," << g.labels[i] << "\n";
    }
    {
        std::ofstream out(out_path(cfg, "features.csv"));
        if (!out) throw ConfigError("cannot write features.csv");
        for (int i = 0; i < n; ++i) {
            for (int c = 0; c < x.cols(); ++c) out << (c ? "," : "") << x(i, c);
            out << "\n";
        }
    }
    return 0;
}

int cmd_train(const ExperimentConfig& cfg) {
    ensure_out_dir(cfg);
    Dataset d = load_dataset(cfg, false);
    if (d.g.features.size() == 0 || d.g.labels.empty())
        throw ConfigError("training needs features and labels");

    TrainConfig tc;
    if (cfg.j.contains("train")) {
        ExperimentConfig sub = ExperimentConfig::from_json(cfg.j.at("train"));
        tc.learning_rate = sub.num("learning_rate", tc.learning_rate);
        tc.epochs = static_cast<int>(sub.integer("epochs", tc.epochs));
        tc.l2 = sub.num("l2", tc.l2);
        tc.train_fraction = sub.num("train_fraction", tc.train_fraction);
        tc.val_fraction = sub.num("val_fraction", tc.val_fraction);
        tc.seed = static_cast<std::uint64_t>(sub.integer("seed", 0));
    }

    Splits splits = make_splits(d.g.labels, tc);
    TrainResult tr = train_linear(d.g.features, d.g.labels, splits.train, d.g.num_classes, tc);

    std::string header = cfg.header_comment();
    save_logits(tr.h, out_path(cfg, "logits.csv"), header);
    save_splits(splits, out_path(cfg, "splits.csv"), d.g.original_ids, header);

    double alpha = cfg.num("alpha", 0.85);
    PPRMatrix pi = ppr_full(d.g, alpha);
    std::vector<int> preds = predict(diffuse(pi, tr.h));

    json mj = base_record(cfg);
    mj["final_loss"] = tr.loss_curve.back();
    mj["epochs"] = static_cast<long long>(tr.loss_curve.size()) - 1;
    mj["train_accuracy"] = accuracy(preds, d.g.labels, splits.train);
    bool any_val = std::find(splits.val.begin(), splits.val.end(), 1) != splits.val.end();
    if (any_val) mj["val_accuracy"] = accuracy(preds, d.g.labels, splits.val);
    bool any_test = std::find(splits.test.begin(), splits.test.end(), 1) != splits.test.end();
    if (any_test) mj["test_accuracy"] = accuracy(preds, d.g.labels, splits.test);
    mj["clean_accuracy"] = accuracy(preds, d.g.labels, {});
    write_json(out_path(cfg, "train_metrics.json"), mj);
    return 0;
}

namespace {

ExperimentConfig build_config(const std::string& config_path, const std::string& scenario,
                              double alpha, bool alpha_set, double budget, bool budget_set,
                              const std::string& local_budget, const std::string& method,
                              const std::string& seeds, const std::string& out,
                              const std::string& mask, const std::string& runs,
                              long long threads, bool threads_set) {
    ExperimentConfig cfg;
    if (!config_path.empty()) cfg = ExperimentConfig::from_file(config_path);

    if (!scenario.empty()) cfg.j["scenario"] = scenario;
    if (alpha_set) cfg.j["alpha"] = alpha;
    if (budget_set) {
        cfg.j.erase("immune_budget");
        cfg.j.erase("immune_budget_fraction");
        if (budget > 0 && budget < 1.0)
            cfg.j["immune_budget_fraction"] = budget;
        else
            cfg.j["immune_budget"] = static_cast<long long>(budget);
    }
    if (!local_budget.empty()) {
        if (local_budget == "degree" || local_budget == "none")
            cfg.j["immune_local_budget"] = local_budget;
        else if (local_budget == "max-deg-minus-6")
            cfg.j["attack_local_budget"] = local_budget;
        else
            throw ConfigError("--local-budget must be degree, none, or max-deg-minus-6");
    }
    if (!method.empty()) cfg.j["method"] = method;
    if (!seeds.empty()) {
        json arr = json::array();
        std::istringstream ss(seeds);
        std::string tok;
        while (std::getline(ss, tok, ',')) {
            try {
                arr.push_back(std::stoll(tok));
            } catch (const std::exception&) {
                throw ConfigError("--seeds expects a comma-separated integer list");
            }
        }
        cfg.j["seeds"] = arr;
    }
    if (!out.empty()) cfg.j["out"] = out;
    if (!mask.empty()) cfg.j["mask"] = mask;
    if (!runs.empty()) cfg.j["runs"] = runs;
    if (threads_set) cfg.j["threads"] = threads;

    cfg.resolve_defaults();
    return cfg;
}

}  // namespace

int run_cli(int argc, char** argv) {
    CLI::App app{"Certifiable robustness and immunization for PPR diffusion classifiers"};
    app.require_subcommand(1);

    std::string config_path, scenario, local_budget, method, seeds, out, mask, runs;
    double alpha = 0.85, budget = 0;
    long long threads = 1;

    auto add_common = [&](CLI::App* sub) {
        sub->add_option("--config", config_path, "JSON config file");
        sub->add_option("--scenario", scenario, "remove-only or remove-add");
        sub->add_option("--alpha", alpha, "transition parameter in (0,1)");
        sub->add_option("--budget", budget,
                        "immune budget: integer count, or fraction (<1) of undirected "
                        "clean edges (remove-only) / node pairs (remove-add)");
        sub->add_option("--local-budget", local_budget,
                        "degree | none (immune budget c_t), max-deg-minus-6 (attack budget)");
        sub->add_option("--method", method, "baseline method");
        sub->add_option("--seeds", seeds, "comma-separated seed list");
        sub->add_option("--out", out, "output directory");
        sub->add_option("--threads", threads, "worker threads");
        return sub;
    };

    CLI::App* c_certify = add_common(app.add_subcommand("certify", "certify robustness"));
    CLI::App* c_immunize = add_common(app.add_subcommand("immunize", "greedy immunization"));
    CLI::App* c_baseline = add_common(app.add_subcommand("baseline", "baseline selectors"));
    CLI::App* c_analyze = add_common(app.add_subcommand("analyze", "immune edge distributions"));
    c_analyze->add_option("--mask", mask, "immune mask CSV");
    CLI::App* c_report = add_common(app.add_subcommand("report", "consolidate run metrics"));
    c_report->add_option("--runs", runs, "directory of run outputs");
    CLI::App* c_synth = add_common(app.add_subcommand("synth", "generate synthetic dataset"));
    CLI::App* c_train = add_common(app.add_subcommand("train", "train the linear logits model"));

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        int code = app.exit(e);
        return code == 0 ? 0 : 2;
    }

    bool alpha_set = false, budget_set = false, threads_set = false;
    for (CLI::App* sub : {c_certify, c_immunize, c_baseline, c_analyze, c_report, c_synth,
                          c_train}) {
        if (!sub->parsed()) continue;
        alpha_set = sub->count("--alpha") > 0;
        budget_set = sub->count("--budget") > 0;
        threads_set = sub->count("--threads") > 0;
    }

    try {
        ExperimentConfig cfg =
            build_config(config_path, scenario, alpha, alpha_set, budget, budget_set,
                         local_budget, method, seeds, out, mask, runs, threads, threads_set);

        if (c_certify->parsed()) return cmd_certify(cfg);
        if (c_immunize->parsed()) return cmd_immunize(cfg);
        if (c_baseline->parsed()) return cmd_baseline(cfg);
        if (c_analyze->parsed()) return cmd_analyze(cfg);
        if (c_report->parsed()) return cmd_report(cfg);
        if (c_synth->parsed()) return cmd_synth(cfg);
        if (c_train->parsed()) return cmd_train(cfg);
    } catch (const ConfigError& e) {
        std::fprintf(stderr, "config error: %s\n", e.what());
        return 2;
    } catch (const NumericalError& e) {
        std::fprintf(stderr, "numerical error: %s\n", e.what());
        return 3;
    }
    std::fprintf(stderr, "config error: no subcommand selected\n");
    return 2;
}

}  // namespace advimmune
