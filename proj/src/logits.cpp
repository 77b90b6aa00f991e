#include "advimmune/logits.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <sstream>

#include "advimmune/immunize.hpp"

namespace advimmune {

Eigen::MatrixXd load_logits(const std::string& path, int num_nodes) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open logits: " + path);
    std::vector<std::vector<double>> rows;
    std::string line;
    int lineno = 0;
    std::size_t width = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty() || line[0] == '#') continue;
        std::istringstream ss(line);
        std::string tok;
        std::vector<double> row;
        while (std::getline(ss, tok, ',')) {
            try {
                row.push_back(std::stod(tok));
            } catch (const std::exception&) {
                if (lineno == 1 && rows.empty()) {
                    row.clear();
                    break;  // header
                }
                throw ConfigError(path + ":" + std::to_string(lineno) + ": bad logit value");
            }
        }
        if (row.empty()) continue;
        if (width == 0) width = row.size();
        if (row.size() != width)
            throw ConfigError(path + ":" + std::to_string(lineno) + ": ragged logits row");
        rows.push_back(std::move(row));
    }
    if (static_cast<int>(rows.size()) != num_nodes)
        throw ConfigError(path + ": expected " + std::to_string(num_nodes) +
                          " logit rows, got " + std::to_string(rows.size()));
    if (width < 2) throw ConfigError(path + ": need at least 2 classes of logits");

    Eigen::MatrixXd h(num_nodes, static_cast<int>(width));
    for (int i = 0; i < num_nodes; ++i)
        for (std::size_t k = 0; k < width; ++k) h(i, static_cast<int>(k)) = rows[i][k];
    return h;
}

void save_logits(const Eigen::MatrixXd& h, const std::string& path,
                 const std::string& header_comment) {
    std::ofstream out(path);
    if (!out) throw ConfigError("cannot write logits: " + path);
    if (!header_comment.empty()) out << "# " << header_comment << "\n";
    char buf[64];
    for (int i = 0; i < h.rows(); ++i) {
        for (int k = 0; k < h.cols(); ++k) {
            std::snprintf(buf, sizeof(buf), "%.17g", h(i, k));
            out << (k ? "," : "") << buf;
        }
        out << "\n";
    }
}

Splits make_splits(const std::vector<int>& labels, const TrainConfig& cfg) {
    int n = static_cast<int>(labels.size());
    if (cfg.train_fraction <= 0 || cfg.val_fraction < 0 ||
        cfg.train_fraction + cfg.val_fraction >= 1.0)
        throw ConfigError("split fractions must satisfy 0 < train, 0 <= val, train+val < 1");

    std::map<int, std::vector<int>> by_class;
    for (int i = 0; i < n; ++i)
        if (labels[i] >= 0) by_class[labels[i]].push_back(i);
    if (by_class.empty()) throw ConfigError("no labeled nodes to split");

    Splits s;
    s.train.assign(n, 0);
    s.val.assign(n, 0);
    s.test.assign(n, 0);

    Rng rng(cfg.seed);
    for (auto& [cls, members] : by_class) {
        rng.shuffle(members);
        int m = static_cast<int>(members.size());
        int n_train = std::max(1, static_cast<int>(std::llround(cfg.train_fraction * m)));
        int n_val = static_cast<int>(std::llround(cfg.val_fraction * m));
        n_train = std::min(n_train, m);
        n_val = std::min(n_val, m - n_train);
        for (int i = 0; i < m; ++i) {
            if (i < n_train)
                s.train[members[i]] = 1;
            else if (i < n_train + n_val)
                s.val[members[i]] = 1;
            else
                s.test[members[i]] = 1;
        }
    }
    return s;
}

void save_splits(const Splits& s, const std::string& path,
                 const std::vector<long long>& original_ids,
                 const std::string& header_comment) {
    std::ofstream out(path);
    if (!out) throw ConfigError("cannot write splits: " + path);
    if (!header_comment.empty()) out << "# " << header_comment << "\n";
    out << "node,split\n";
    for (std::size_t i = 0; i < original_ids.size(); ++i) {
        const char* name = s.train[i] ? "train" : s.val[i] ? "val" : s.test[i] ? "test" : "none";
        out << original_ids[i] << "," << name << "\n";
    }
}

namespace {

double ce_loss(const Eigen::MatrixXd& z, const std::vector<int>& labels,
               const std::vector<int>& train_nodes, const Eigen::MatrixXd& w, double l2) {
    double loss = 0;
    for (int idx = 0; idx < static_cast<int>(train_nodes.size()); ++idx) {
        int i = train_nodes[idx];
        double mx = z.row(idx).maxCoeff();
        double lse = std::log((z.row(idx).array() - mx).exp().sum()) + mx;
        loss += lse - z(idx, labels[i]);
    }
    loss /= static_cast<double>(train_nodes.size());
    loss += 0.5 * l2 * w.squaredNorm();
    return loss;
}

}  // namespace

TrainResult train_linear(const Eigen::MatrixXd& features, const std::vector<int>& labels,
                         const std::vector<char>& train_mask, int num_classes,
                         const TrainConfig& cfg) {
    int n = static_cast<int>(features.rows());
    int d = static_cast<int>(features.cols());
    if (num_classes < 2) throw ConfigError("need at least 2 classes to train");
    if (static_cast<int>(labels.size()) != n || static_cast<int>(train_mask.size()) != n)
        throw ConfigError("labels or train mask does not match features");

    std::vector<int> train_nodes;
    for (int i = 0; i < n; ++i) {
        if (!train_mask[i]) continue;
        if (labels[i] < 0 || labels[i] >= num_classes)
            throw ConfigError("train node " + std::to_string(i) + " lacks a valid label");
        train_nodes.push_back(i);
    }
    if (train_nodes.empty()) throw ConfigError("empty train set");

    int m = static_cast<int>(train_nodes.size());
    Eigen::MatrixXd x(m, d);
    for (int idx = 0; idx < m; ++idx) x.row(idx) = features.row(train_nodes[idx]);

    TrainResult res;
    res.w = Eigen::MatrixXd::Zero(d, num_classes);
    res.b = Eigen::VectorXd::Zero(num_classes);

    double lr = cfg.learning_rate;
    Eigen::MatrixXd z = x * res.w;
    for (int idx = 0; idx < m; ++idx) z.row(idx) += res.b.transpose();
    double loss = ce_loss(z, labels, train_nodes, res.w, cfg.l2);
    res.loss_curve.push_back(loss);

    for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
        Eigen::MatrixXd p(m, num_classes);
        for (int idx = 0; idx < m; ++idx) {
            double mx = z.row(idx).maxCoeff();
            Eigen::ArrayXd e = (z.row(idx).array() - mx).exp();
            p.row(idx) = (e / e.sum()).matrix();
        }
        for (int idx = 0; idx < m; ++idx) p(idx, labels[train_nodes[idx]]) -= 1.0;
        p /= static_cast<double>(m);

        Eigen::MatrixXd gw = x.transpose() * p + cfg.l2 * res.w;
        Eigen::VectorXd gb = p.colwise().sum().transpose();

        while (true) {
            Eigen::MatrixXd w_new = res.w - lr * gw;
            Eigen::VectorXd b_new = res.b - lr * gb;
            Eigen::MatrixXd z_new = x * w_new;
            for (int idx = 0; idx < m; ++idx) z_new.row(idx) += b_new.transpose();
            double loss_new = ce_loss(z_new, labels, train_nodes, w_new, cfg.l2);
            if (std::isfinite(loss_new) && loss_new <= loss) {
                res.w = std::move(w_new);
                res.b = std::move(b_new);
                z = std::move(z_new);
                loss = loss_new;
                break;
            }
            lr *= 0.5;
            if (lr < 1e-12)
                throw NumericalError("training diverged: step size underflow");
        }
        res.loss_curve.push_back(loss);
    }

    res.h = features * res.w;
    for (int i = 0; i < n; ++i) res.h.row(i) += res.b.transpose();
    return res;
}

double accuracy(const std::vector<int>& predictions, const std::vector<int>& labels,
                const std::vector<char>& mask) {
    if (predictions.size() != labels.size())
        throw ConfigError("predictions and labels differ in length");
    long long correct = 0, total = 0;
    for (std::size_t i = 0; i < labels.size(); ++i) {
        if (!mask.empty() && !mask[i]) continue;
        if (labels[i] < 0) continue;
        ++total;
        if (predictions[i] == labels[i]) ++correct;
    }
    if (total == 0) throw ConfigError("no labeled nodes under evaluation mask");
    return static_cast<double>(correct) / static_cast<double>(total);
}

double accuracy_under_attack(const Graph& g, const Eigen::MatrixXd& h,
                             const AttackSpec& spec, double alpha, const DeltasMap& deltas,
                             const std::vector<MarginReport>& reports,
                             const ImmuneMask* mask, const std::vector<char>& eval_mask,
                             AttackEvalMode mode) {
    spec.validate(g);
    int n = g.num_nodes;
    if (static_cast<int>(reports.size()) != n)
        throw ConfigError("reports do not match graph size");
    ImmuneMask empty(n);
    const ImmuneMask& protection = mask ? *mask : empty;

    auto predictions_under = [&](const PerturbationDelta& delta) {
        auto rows = modified_adjacency(g, delta, protection);
        Eigen::MatrixXd p = transition_from_rows(rows);
        Eigen::MatrixXd m = Eigen::MatrixXd::Identity(n, n) - alpha * p;
        Eigen::PartialPivLU<Eigen::MatrixXd> lu(m);
        Eigen::MatrixXd hdiff = (1.0 - alpha) * lu.solve(h);
        return predict(hdiff);
    };

    if (mode == AttackEvalMode::GlobalWorstPair) {
        double worst = 2.0;
        for (const auto& [pair, delta] : deltas) {
            double acc = accuracy(predictions_under(delta), g.labels, eval_mask);
            worst = std::min(worst, acc);
        }
        if (worst > 1.0) throw ConfigError("no deltas to evaluate");
        return worst;
    }

    std::map<std::pair<int, int>, std::vector<int>> groups;
    for (int t = 0; t < n; ++t) {
        if (!eval_mask.empty() && !eval_mask[t]) continue;
        if (g.labels.empty() || g.labels[t] < 0) continue;
        groups[{reports[t].label_class, reports[t].worst_class}].push_back(t);
    }
    long long correct = 0, total = 0;
    for (const auto& [pair, members] : groups) {
        auto it = deltas.find(pair);
        if (it == deltas.end())
            throw ConfigError("missing delta for class pair (" + std::to_string(pair.first) +
                              "," + std::to_string(pair.second) + ")");
        std::vector<int> preds = predictions_under(it->second);
        for (int t : members) {
            ++total;
            if (preds[t] == g.labels[t]) ++correct;
        }
    }
    if (total == 0) throw ConfigError("no labeled nodes under evaluation mask");
    return static_cast<double>(correct) / static_cast<double>(total);
}

}  // namespace advimmune
