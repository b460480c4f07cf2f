#include "probpose/metrics.hpp"

#include "probpose/error.hpp"
#include "probpose/parallel.hpp"
#include "probpose/random.hpp"

#include <algorithm>
#include <numeric>

namespace probpose {

std::string_view to_string(DistanceCase c)
{
    switch (c) {
    case DistanceCase::BothIn: return "both-in";
    case DistanceCase::GtOutPredIn: return "gt-out-pred-in";
    case DistanceCase::GtInPredOut: return "gt-in-pred-out";
    case DistanceCase::BothOut: return "both-out";
    }
    return "unknown";
}

KeypointVerdict ex_oks_keypoint(const PresentPoint& gt, const PresentPoint& pred, const ActivationWindow& window,
    const OksParams& params)
{
    KeypointVerdict v;
    v.gt_present = gt.present;
    v.pred_present = pred.present;
    if (gt.present && pred.present) {
        v.distance_case = DistanceCase::BothIn;
        v.distance = distance(gt.position, pred.position);
    } else if (!gt.present && pred.present) {
        v.distance_case = DistanceCase::GtOutPredIn;
        v.distance = boundary_distance(window, pred.position);
    } else if (gt.present && !pred.present) {
        v.distance_case = DistanceCase::GtInPredOut;
        v.distance = boundary_distance(window, gt.position);
    } else {
        v.distance_case = DistanceCase::BothOut;
        v.distance = 0.0;
        v.similarity = 1.0;
        return v;
    }
    v.similarity = oks_similarity(v.distance, params);
    return v;
}

std::array<std::optional<bool>, kNumKeypoints> gt_presence(const GtInstance& gt, const ActivationWindow& window)
{
    std::array<std::optional<bool>, kNumKeypoints> out{};
    for (std::size_t k = 0; k < kNumKeypoints; ++k) {
        const Keypoint& kp = gt.pose.keypoints[k];
        if (kp.labeled())
            out[k] = gt.presence ? (*gt.presence)[k] : window.rect().contains(kp.position);
        else if (gt.presence && !(*gt.presence)[k])
            out[k] = false;
    }
    return out;
}

double pose_oks(const PoseInstance& gt, const Prediction& pred, const KappaTable& kappas)
{
    const double scale = gt.object_scale();
    double sum = 0.0;
    int count = 0;
    for (std::size_t k = 0; k < kNumKeypoints; ++k) {
        const Keypoint& kp = gt.keypoints[k];
        if (!kp.labeled())
            continue;
        sum += oks_similarity(distance(kp.position, pred.keypoints[k]), { scale, kappas[k] });
        ++count;
    }
    if (count == 0)
        throw Error(ErrorCode::InvalidArgument, "OKS of an instance without labeled keypoints");
    return sum / count;
}

double pose_ex_oks(const GtInstance& gt, const Prediction& pred, const ActivationWindow& window,
    const KappaTable& kappas, double presence_threshold)
{
    if (!(presence_threshold >= 0.0 && presence_threshold <= 1.0))
        throw Error(ErrorCode::InvalidArgument, "presence threshold must lie in [0, 1]");
    const double scale = gt.pose.object_scale();
    const auto presence = gt_presence(gt, window);
    double sum = 0.0;
    int count = 0;
    for (std::size_t k = 0; k < kNumKeypoints; ++k) {
        if (!presence[k])
            continue;
        const PresentPoint g { gt.pose.keypoints[k].position, *presence[k] };
        const PresentPoint p { pred.keypoints[k], pred.presence[k] >= presence_threshold };
        sum += ex_oks_keypoint(g, p, window, { scale, kappas[k] }).similarity;
        ++count;
    }
    if (count == 0)
        throw Error(ErrorCode::InvalidArgument, "Ex-OKS of an instance without evaluated keypoints");
    return sum / count;
}

std::array<double, kNumOksThresholds> oks_thresholds()
{
    std::array<double, kNumOksThresholds> t{};
    for (std::size_t i = 0; i < kNumOksThresholds; ++i)
        t[i] = static_cast<double>(50 + 5 * i) / 100.0;
    return t;
}

ImageSimilarity image_similarity(const EvalImage& image, const EvalConfig& cfg)
{
    std::vector<std::size_t> order(image.preds.size());
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(),
        [&](std::size_t a, std::size_t b) { return image.preds[a].score > image.preds[b].score; });
    if (order.size() > cfg.max_dets)
        order.resize(cfg.max_dets);

    std::vector<const GtInstance*> gts;
    std::vector<ActivationWindow> windows;
    for (const auto& g : image.gts) {
        if (cfg.similarity == Similarity::Oks) {
            if (g.pose.num_labeled() > 0)
                gts.push_back(&g);
            continue;
        }
        auto window = window_from_bbox(g.pose.bbox, image.extent, cfg.window);
        const auto presence = gt_presence(g, window);
        if (std::any_of(presence.begin(), presence.end(), [](const auto& p) { return p.has_value(); })) {
            gts.push_back(&g);
            windows.push_back(std::move(window));
        }
    }

    ImageSimilarity out;
    out.num_gt = gts.size();
    for (std::size_t d : order) {
        const Prediction& pred = image.preds[d];
        out.scores.push_back(pred.score);
        std::vector<double> row(gts.size());
        for (std::size_t g = 0; g < gts.size(); ++g)
            row[g] = cfg.similarity == Similarity::Oks
                ? pose_oks(gts[g]->pose, pred, cfg.kappas)
                : pose_ex_oks(*gts[g], pred, windows[g], cfg.kappas, cfg.presence_threshold);
        out.sim.push_back(std::move(row));
    }
    return out;
}

ApCurve mean_ap(std::span<const ImageSimilarity> images)
{
    ApCurve curve;
    curve.thresholds = oks_thresholds();
    for (const auto& img : images) {
        curve.num_gt += img.num_gt;
        curve.num_pred += img.scores.size();
    }

    for (std::size_t t = 0; t < kNumOksThresholds; ++t) {
        const double floor = std::min(curve.thresholds[t], 1.0 - 1e-10);
        std::vector<std::pair<double, bool>> dets;
        dets.reserve(curve.num_pred);
        for (const auto& img : images) {
            std::vector<bool> taken(img.num_gt, false);
            for (std::size_t d = 0; d < img.scores.size(); ++d) {
                double best = floor;
                std::ptrdiff_t match = -1;
                for (std::size_t g = 0; g < img.num_gt; ++g) {
                    if (taken[g] || img.sim[d][g] < best)
                        continue;
                    best = img.sim[d][g];
                    match = static_cast<std::ptrdiff_t>(g);
                }
                if (match >= 0)
                    taken[static_cast<std::size_t>(match)] = true;
                dets.emplace_back(img.scores[d], match >= 0);
            }
        }
        std::stable_sort(dets.begin(), dets.end(), [](const auto& a, const auto& b) { return a.first > b.first; });

        auto& q = curve.precision[t];
        q.fill(0.0);
        if (curve.num_gt == 0 || dets.empty()) {
            curve.ap_per_threshold[t] = 0.0;
            continue;
        }
        std::vector<double> recall(dets.size());
        std::vector<double> precision(dets.size());
        double tp = 0.0;
        double fp = 0.0;
        for (std::size_t i = 0; i < dets.size(); ++i) {
            (dets[i].second ? tp : fp) += 1.0;
            recall[i] = tp / static_cast<double>(curve.num_gt);
            precision[i] = tp / (tp + fp);
        }
        for (std::size_t i = precision.size() - 1; i > 0; --i)
            precision[i - 1] = std::max(precision[i - 1], precision[i]);

        double sum = 0.0;
        for (std::size_t r = 0; r < kNumRecallPoints; ++r) {
            const double level = static_cast<double>(r) / 100.0;
            const auto it = std::lower_bound(recall.begin(), recall.end(), level);
            if (it != recall.end())
                q[r] = precision[static_cast<std::size_t>(it - recall.begin())];
            sum += q[r];
        }
        curve.final_recall[t] = recall.back();
        curve.ap_per_threshold[t] = sum / static_cast<double>(kNumRecallPoints);
    }

    double total = 0.0;
    for (double ap : curve.ap_per_threshold)
        total += ap;
    curve.ap = total / static_cast<double>(kNumOksThresholds);
    return curve;
}

ApCurve mean_ap(std::span<const EvalImage> images, const EvalConfig& cfg)
{
    std::vector<ImageSimilarity> sims(images.size());
    parallel_for(images.size(), cfg.jobs, [&](std::size_t i) { sims[i] = image_similarity(images[i], cfg); });
    return mean_ap(sims);
}

std::vector<std::pair<std::size_t, std::size_t>> match_instances(const EvalImage& image, const KappaTable& kappas)
{
    std::vector<std::size_t> order(image.preds.size());
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(),
        [&](std::size_t a, std::size_t b) { return image.preds[a].score > image.preds[b].score; });

    std::vector<bool> taken(image.gts.size(), false);
    std::vector<std::pair<std::size_t, std::size_t>> pairs;
    for (std::size_t d : order) {
        double best = 0.0;
        std::ptrdiff_t match = -1;
        for (std::size_t g = 0; g < image.gts.size(); ++g) {
            if (taken[g] || image.gts[g].pose.num_labeled() == 0)
                continue;
            const double s = pose_oks(image.gts[g].pose, image.preds[d], kappas);
            if (s > best) {
                best = s;
                match = static_cast<std::ptrdiff_t>(g);
            }
        }
        if (match >= 0) {
            taken[static_cast<std::size_t>(match)] = true;
            pairs.emplace_back(static_cast<std::size_t>(match), d);
        }
    }
    std::sort(pairs.begin(), pairs.end());
    return pairs;
}

PresenceSweep presence_sweep(std::span<const PresenceSample> samples, bool balanced, std::uint64_t seed)
{
    std::vector<std::size_t> present;
    std::vector<std::size_t> absent;
    for (std::size_t i = 0; i < samples.size(); ++i) {
        if (!(samples[i].score >= 0.0 && samples[i].score <= 1.0))
            throw Error(ErrorCode::InvalidArgument, "presence score outside [0, 1]");
        (samples[i].present ? present : absent).push_back(i);
    }
    if (samples.empty())
        throw Error(ErrorCode::InvalidArgument, "presence sweep needs at least one sample");

    std::vector<std::size_t> chosen;
    if (balanced) {
        if (present.empty() || absent.empty())
            throw Error(ErrorCode::InvalidArgument, "balanced presence sweep needs samples of both classes");
        auto& majority = present.size() >= absent.size() ? present : absent;
        const auto& minority = present.size() >= absent.size() ? absent : present;
        Rng rng(seed);
        for (std::size_t i = majority.size(); i > 1; --i)
            std::swap(majority[i - 1], majority[rng.below(i)]);
        majority.resize(minority.size());
        std::sort(majority.begin(), majority.end());
    }
    chosen.insert(chosen.end(), present.begin(), present.end());
    chosen.insert(chosen.end(), absent.begin(), absent.end());
    std::sort(chosen.begin(), chosen.end());

    PresenceSweep out;
    out.num_present = present.size();
    out.num_absent = absent.size();
    out.degenerate = present.empty() || absent.empty();
    out.best_accuracy = -1.0;
    for (int step = 0; step <= 100; ++step) {
        const double t = static_cast<double>(step) / 100.0;
        std::size_t correct = 0;
        for (std::size_t i : chosen)
            correct += (samples[i].score >= t) == samples[i].present ? 1 : 0;
        const double acc = static_cast<double>(correct) / static_cast<double>(chosen.size());
        out.curve.push_back({ t, acc });
        if (acc > out.best_accuracy) {
            out.best_accuracy = acc;
            out.best_threshold = t;
        }
    }
    return out;
}

} // namespace probpose
