#include "facerep/evalmod.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <map>
#include <set>
#include <stdexcept>

#include <json.hpp>

namespace facerep {

namespace {

void check_scored(const std::vector<ScoredPair>& scored) {
    bool pos = false, neg = false;
    for (const ScoredPair& s : scored) {
        if (!std::isfinite(s.distance)) throw std::invalid_argument("scored pair: non-finite distance");
        if (s.y == 1) pos = true;
        else if (s.y == -1) neg = true;
        else throw std::invalid_argument("scored pair: label must be +1 or -1");
    }
    if (!pos || !neg) throw std::invalid_argument("scored pairs: need both labels present");
}

}  // namespace

std::vector<RocPoint> roc_curve(const std::vector<ScoredPair>& scored) {
    check_scored(scored);
    std::vector<std::pair<double, int>> sorted;
    sorted.reserve(scored.size());
    int64_t p = 0, n = 0;
    for (const ScoredPair& s : scored) {
        sorted.emplace_back(s.distance, s.y);
        (s.y == 1 ? p : n) += 1;
    }
    std::sort(sorted.begin(), sorted.end());

    std::vector<RocPoint> curve;
    int64_t tp = 0, fp = 0;
    size_t i = 0;
    while (i < sorted.size()) {
        // operating point for t = this distance: counts strictly below it
        curve.push_back(RocPoint{static_cast<double>(fp) / n, static_cast<double>(tp) / p,
                                 sorted[i].first});
        const double v = sorted[i].first;
        while (i < sorted.size() && sorted[i].first == v) {
            (sorted[i].second == 1 ? tp : fp) += 1;
            ++i;
        }
    }
    curve.push_back(RocPoint{1.0, 1.0, std::numeric_limits<double>::infinity()});
    return curve;
}

double auc(const std::vector<RocPoint>& curve) {
    if (curve.size() < 2) throw std::invalid_argument("auc: degenerate curve");
    double area = 0;
    for (size_t i = 1; i < curve.size(); ++i) {
        area += (curve[i].fpr - curve[i - 1].fpr) * (curve[i].tpr + curve[i - 1].tpr) / 2.0;
    }
    return area;
}

double eer(const std::vector<RocPoint>& curve) {
    if (curve.size() < 2) throw std::invalid_argument("eer: degenerate curve");
    // f = FPR - FNR is nondecreasing along the curve and spans -1..1
    auto f = [](const RocPoint& pt) { return pt.fpr - (1.0 - pt.tpr); };
    for (size_t i = 0; i < curve.size(); ++i) {
        const double fi = f(curve[i]);
        if (fi == 0.0) return curve[i].fpr;
        if (fi > 0.0) {
            const RocPoint& a = curve[i - 1];
            const RocPoint& b = curve[i];
            const double fa = f(a);
            const double t = -fa / (fi - fa);
            return a.fpr + t * (b.fpr - a.fpr);
        }
    }
    throw std::logic_error("eer: no crossing found");
}

double accuracy_at(const std::vector<ScoredPair>& scored, double threshold) {
    if (scored.empty()) throw std::invalid_argument("accuracy_at: empty input");
    int64_t correct = 0;
    for (const ScoredPair& s : scored) {
        if ((s.y == 1 && s.distance < threshold) || (s.y == -1 && s.distance > threshold)) {
            ++correct;
        }
    }
    return static_cast<double>(correct) / static_cast<double>(scored.size());
}

double best_threshold(const std::vector<ScoredPair>& scored) {
    if (scored.empty()) throw std::invalid_argument("best_threshold: empty input");
    std::set<double> distinct;
    for (const ScoredPair& s : scored) distinct.insert(s.distance);
    std::vector<double> values(distinct.begin(), distinct.end());
    std::vector<double> candidates;
    candidates.push_back(values.front() - 1.0);
    for (size_t i = 1; i < values.size(); ++i) {
        candidates.push_back((values[i - 1] + values[i]) / 2.0);
    }
    candidates.push_back(values.back() + 1.0);

    double best_t = candidates.front();
    double best_acc = -1.0;
    for (const double t : candidates) {
        const double acc = accuracy_at(scored, t);
        if (acc > best_acc) {
            best_acc = acc;
            best_t = t;
        }
    }
    return best_t;
}

EvalReport kfold_eval(const std::vector<ScoredPair>& scored, int k) {
    if (k < 2) throw std::invalid_argument("kfold_eval: need k >= 2");
    std::map<int, std::vector<ScoredPair>> by_fold;
    for (const ScoredPair& s : scored) {
        if (s.fold < 0 || s.fold >= k) {
            throw std::invalid_argument("kfold_eval: fold " + std::to_string(s.fold) +
                                        " outside 0.." + std::to_string(k - 1));
        }
        by_fold[s.fold].push_back(s);
    }
    for (int f = 0; f < k; ++f) {
        if (!by_fold.count(f)) {
            throw std::invalid_argument("kfold_eval: fold " + std::to_string(f) + " is empty");
        }
    }
    EvalReport report;
    for (int f = 0; f < k; ++f) {
        std::vector<ScoredPair> train;
        for (const auto& [fold, pairs] : by_fold) {
            if (fold != f) train.insert(train.end(), pairs.begin(), pairs.end());
        }
        FoldReport fr;
        fr.fold = f;
        fr.threshold = best_threshold(train);
        fr.accuracy = accuracy_at(by_fold[f], fr.threshold);
        fr.roc = roc_curve(by_fold[f]);
        fr.auc = auc(fr.roc);
        fr.eer = eer(fr.roc);
        report.mean_accuracy += fr.accuracy;
        report.mean_eer += fr.eer;
        report.mean_auc += fr.auc;
        report.folds.push_back(std::move(fr));
    }
    report.mean_accuracy /= k;
    report.mean_eer /= k;
    report.mean_auc /= k;
    return report;
}

void write_eval_report(const std::string& path, const EvalReport& report, const Provenance& prov) {
    using nlohmann::json;
    json j;
    j["__provenance__"] =
        json{{"stage", prov.stage}, {"seed", prov.seed}, {"config_hash", prov.config_hash}};
    j["mean_accuracy"] = report.mean_accuracy;
    j["mean_eer"] = report.mean_eer;
    j["mean_auc"] = report.mean_auc;
    auto folds = json::array();
    for (const FoldReport& f : report.folds) {
        folds.push_back({{"fold", f.fold},
                         {"threshold", f.threshold},
                         {"accuracy", f.accuracy},
                         {"eer", f.eer},
                         {"auc", f.auc}});
    }
    j["folds"] = folds;
    std::ofstream os(path);
    if (!os) throw std::runtime_error("cannot write " + path);
    os << j.dump(2) << "\n";
    if (!os) throw std::runtime_error("failed while writing " + path);
}

EvalReport read_eval_report(const std::string& path) {
    std::ifstream is(path);
    if (!is) throw std::runtime_error("cannot read " + path);
    nlohmann::json j;
    is >> j;
    EvalReport report;
    report.mean_accuracy = j.at("mean_accuracy").get<double>();
    report.mean_eer = j.at("mean_eer").get<double>();
    report.mean_auc = j.at("mean_auc").get<double>();
    for (const auto& f : j.at("folds")) {
        FoldReport fr;
        fr.fold = f.at("fold").get<int>();
        fr.threshold = f.at("threshold").get<double>();
        fr.accuracy = f.at("accuracy").get<double>();
        fr.eer = f.at("eer").get<double>();
        fr.auc = f.at("auc").get<double>();
        report.folds.push_back(std::move(fr));
    }
    return report;
}

void write_roc_csv(const std::string& path, const std::vector<RocPoint>& curve,
                   const Provenance& prov) {
    std::ofstream os(path);
    if (!os) throw std::runtime_error("cannot write " + path);
    os << prov.to_comment_line() << "\n";
    os << "fpr,tpr,threshold\n";
    char buf[96];
    for (const RocPoint& pt : curve) {
        std::snprintf(buf, sizeof(buf), "%.17g,%.17g,%.17g\n", pt.fpr, pt.tpr, pt.threshold);
        os << buf;
    }
    if (!os) throw std::runtime_error("failed while writing " + path);
}

}  // namespace facerep
