#pragma once

/// \file metrics.hpp
/// \brief OKS, Ex-OKS, COCO-style (Ex-)mAP and presence threshold sweeps.

#include "probpose/geometry.hpp"
#include "probpose/oks.hpp"

#include <array>
#include <cstdint>
#include <optional>
#include <span>
#include <string_view>
#include <utility>
#include <vector>

namespace probpose {

enum class DistanceCase { BothIn, GtOutPredIn, GtInPredOut, BothOut };

std::string_view to_string(DistanceCase c);

struct KeypointVerdict {
    bool gt_present = false;
    bool pred_present = false;
    DistanceCase distance_case = DistanceCase::BothOut;
    double distance = 0.0;
    double similarity = 1.0;
};

struct PresentPoint {
    Point position;
    bool present = true;
};

/// Ex-OKS for one keypoint. The distance is point-to-point when both are
/// present, the distance from the present point to the window boundary when
/// exactly one is present, and zero when both are absent.
KeypointVerdict ex_oks_keypoint(const PresentPoint& gt, const PresentPoint& pred, const ActivationWindow& window,
    const OksParams& params);

/// Ground truth with the optional per-keypoint presence extension.
struct GtInstance {
    PoseInstance pose;
    std::optional<std::array<bool, kNumKeypoints>> presence;
};

struct Prediction {
    long long image_id = 0;
    double score = 0.0;
    std::array<Point, kNumKeypoints> keypoints{};
    std::array<double, kNumKeypoints> confidence{};
    /// Presence probabilities in [0, 1].
    std::array<double, kNumKeypoints> presence{};
};

/// Presence per GT keypoint, nullopt when excluded from evaluation. Labeled
/// keypoints use the extension flag when given, else "inside the window".
/// Unlabeled keypoints are evaluated only when the extension flags them absent.
std::array<std::optional<bool>, kNumKeypoints> gt_presence(const GtInstance& gt, const ActivationWindow& window);

/// Mean OKS over labeled GT keypoints. Throws when none is labeled.
double pose_oks(const PoseInstance& gt, const Prediction& pred, const KappaTable& kappas);

/// Mean Ex-OKS over the evaluated GT keypoints, with predicted presence
/// binarised as presence >= threshold. Throws when none is evaluated.
double pose_ex_oks(const GtInstance& gt, const Prediction& pred, const ActivationWindow& window,
    const KappaTable& kappas, double presence_threshold);

enum class Similarity { Oks, ExOks };

struct EvalImage {
    long long image_id = 0;
    ImageExtent extent;
    std::vector<GtInstance> gts;
    std::vector<Prediction> preds;
};

struct EvalConfig {
    Similarity similarity = Similarity::Oks;
    KappaTable kappas;
    WindowConfig window;
    double presence_threshold = 0.5;
    std::size_t max_dets = 20;
    unsigned jobs = 1;
};

inline constexpr std::size_t kNumOksThresholds = 10;
inline constexpr std::size_t kNumRecallPoints = 101;

struct ApCurve {
    std::array<double, kNumOksThresholds> thresholds{};
    std::array<double, kNumOksThresholds> ap_per_threshold{};
    /// Interpolated precision at recall 0.00, 0.01, ..., 1.00, per threshold.
    std::array<std::array<double, kNumRecallPoints>, kNumOksThresholds> precision{};
    std::array<double, kNumOksThresholds> final_recall{};
    double ap = 0.0;
    std::size_t num_gt = 0;
    std::size_t num_pred = 0;
};

/// OKS thresholds 0.50, 0.55, ..., 0.95.
std::array<double, kNumOksThresholds> oks_thresholds();

/// Per-image similarity matrix [pred][gt] after sorting predictions by score
/// and truncating to max_dets; GTs without evaluated keypoints are dropped.
struct ImageSimilarity {
    std::vector<double> scores;
    std::vector<std::vector<double>> sim;
    std::size_t num_gt = 0;
};
ImageSimilarity image_similarity(const EvalImage& image, const EvalConfig& cfg);

/// COCO keypoint protocol: at each threshold t, predictions in score order
/// take the unmatched GT of highest similarity among those >= t; 101-point
/// interpolated AP averaged over the ten thresholds.
ApCurve mean_ap(std::span<const EvalImage> images, const EvalConfig& cfg);
ApCurve mean_ap(std::span<const ImageSimilarity> images);

/// Greedy score-ordered pairing of predictions with GTs by OKS (similarity > 0),
/// used to pair keypoints for presence analysis. Returns (gt, pred) indices.
std::vector<std::pair<std::size_t, std::size_t>> match_instances(const EvalImage& image, const KappaTable& kappas);

struct PresenceSample {
    bool present = false;
    double score = 0.0;
};

struct SweepPoint {
    double threshold = 0.0;
    double accuracy = 0.0;
};

struct PresenceSweep {
    std::vector<SweepPoint> curve;
    double best_threshold = 0.0;
    double best_accuracy = 0.0;
    /// Only one class present: the optimum is meaningless.
    bool degenerate = false;
    std::size_t num_present = 0;
    std::size_t num_absent = 0;
};

/// Accuracy of "present iff score >= t" for t = 0.00, 0.01, ..., 1.00.
/// The best threshold is the lowest one reaching the maximum. With
/// `balanced`, the majority class is subsampled (seeded) to the minority size;
/// that requires both classes.
PresenceSweep presence_sweep(std::span<const PresenceSample> samples, bool balanced, std::uint64_t seed);

} // namespace probpose
