#pragma once

#include <string>
#include <vector>

#include "facerep/records.hpp"

namespace facerep {

struct ScoredPair {
    double distance = 0.0;
    int y = 0;
    int fold = 0;
};

struct RocPoint {
    double fpr = 0.0;
    double tpr = 0.0;
    double threshold = 0.0;
};

// Threshold sweep over the distinct distances (predicted similar when
// distance < t), anchored at (0,0) and (1,1). Needs both labels present.
std::vector<RocPoint> roc_curve(const std::vector<ScoredPair>& scored);

// Trapezoidal area. Identical to the pairwise ranking statistic
// P(positive closer than negative) + half credit for ties.
double auc(const std::vector<RocPoint>& curve);

// Operating point where FPR = FNR, linearly interpolated between adjacent
// curve points when there is no exact crossing.
double eer(const std::vector<RocPoint>& curve);

// Correct iff (y=+1 and distance < t) or (y=-1 and distance > t); ties are
// incorrect.
double accuracy_at(const std::vector<ScoredPair>& scored, double threshold);

// Lowest accuracy-maximizing threshold over the candidate set formed by
// midpoints between consecutive distinct distances plus below-min and
// above-max sentinels.
double best_threshold(const std::vector<ScoredPair>& scored);

struct FoldReport {
    int fold = 0;
    double threshold = 0.0;
    double accuracy = 0.0;
    double eer = 0.0;
    double auc = 0.0;
    std::vector<RocPoint> roc;
};

struct EvalReport {
    std::vector<FoldReport> folds;
    double mean_accuracy = 0.0;
    double mean_eer = 0.0;
    double mean_auc = 0.0;
};

// For every fold: pick the threshold on the union of the other folds, then
// score the held-out fold. Folds must cover 0..k-1, each nonempty.
EvalReport kfold_eval(const std::vector<ScoredPair>& scored, int k = 10);

// LFW 10-fold results of the full-scale configuration: a 64px encoder trained
// on millions of video-mined pairs, plus its metric fine-tuned variant.
// Reference constants only; desk-scale runs on synthetic data do not
// approach them.
struct FullScaleReference {
    static constexpr const char* benchmark = "LFW";
    static constexpr double accuracy_pct = 71.48;
    static constexpr double eer_pct = 28.53;
    static constexpr double auc_pct = 78.78;
    static constexpr double tuned_accuracy_pct = 73.22;
};

void write_eval_report(const std::string& path, const EvalReport& report, const Provenance& prov);
EvalReport read_eval_report(const std::string& path);
void write_roc_csv(const std::string& path, const std::vector<RocPoint>& curve,
                   const Provenance& prov);

}  // namespace facerep
