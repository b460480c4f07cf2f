#include "probpose/cli.hpp"

#include "probpose/calibration.hpp"
#include "probpose/cropgen.hpp"
#include "probpose/decoder.hpp"
#include "probpose/error.hpp"
#include "probpose/fitlab.hpp"
#include "probpose/interop.hpp"
#include "probpose/metrics.hpp"
#include "probpose/random.hpp"

#include <CLI11.hpp>

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <map>
#include <memory>
#include <optional>
#include <sstream>

namespace probpose::cli {

namespace {

    namespace fs = std::filesystem;

    std::string num(double v, int precision = 6)
    {
        if (v == 0.0)
            v = 0.0;
        char buf[64];
        std::snprintf(buf, sizeof buf, "%.*f", precision, v);
        return buf;
    }

    class UsageError : public std::runtime_error {
        using std::runtime_error::runtime_error;
    };

    struct Common {
        std::string kappa_path;
        unsigned jobs = 1;
        WindowConfig window;

        KappaTable kappas() const { return kappa_path.empty() ? KappaTable::coco() : KappaTable::load(kappa_path); }
    };

    void add_common(CLI::App* cmd, Common& c, bool with_window = true)
    {
        cmd->add_option("--kappa-table", c.kappa_path, "Per-keypoint kappa table (name=value lines)")
            ->envname("PROBPOSE_KAPPA_TABLE");
        cmd->add_option("--jobs", c.jobs, "Worker threads")->check(CLI::Range(1u, 256u));
        if (!with_window)
            return;
        cmd->add_option("--aspect", c.window.aspect_w_h, "Window aspect ratio w/h")->check(CLI::PositiveNumber);
        cmd->add_option("--padding", c.window.padding, "Window padding around the bbox")->check(CLI::Range(1.0, 100.0));
        cmd->add_option("--grid-w", c.window.grid_w, "Map columns")->check(CLI::Range(1, 65536));
        cmd->add_option("--grid-h", c.window.grid_h, "Map rows")->check(CLI::Range(1, 65536));
    }

    void log(std::ostream& err, const std::string& msg)
    {
        err << "[probpose] " << msg << '\n';
    }

    GtDocument load_gt(const std::string& path, std::ostream& err)
    {
        GtDocument doc = parse_gt(read_file_text(path));
        for (const auto& w : doc.warnings)
            log(err, path + ": " + w);
        return doc;
    }

    struct EvalOptions {
        Common common;
        std::string gt;
        std::string pred;
        std::string report;
        std::optional<double> threshold;
    };

    std::vector<EvalImage> load_eval(const EvalOptions& o, std::ostream& err, GtDocument* gt_out = nullptr,
        PredictionDocument* pred_out = nullptr)
    {
        GtDocument gt = load_gt(o.gt, err);
        PredictionDocument preds = parse_predictions(read_file_text(o.pred));
        auto images = assemble_eval_images(gt, preds);
        if (gt_out)
            *gt_out = std::move(gt);
        if (pred_out)
            *pred_out = std::move(preds);
        return images;
    }

    Json curve_json(const ApCurve& c)
    {
        Json j = Json::object();
        j["mAP"] = c.ap;
        Json per = Json::array();
        for (std::size_t t = 0; t < kNumOksThresholds; ++t)
            per.push_back({ { "threshold", c.thresholds[t] }, { "ap", c.ap_per_threshold[t] }, { "recall", c.final_recall[t] } });
        j["per_threshold"] = std::move(per);
        j["num_gt"] = c.num_gt;
        j["num_pred"] = c.num_pred;
        return j;
    }

    int cmd_eval(const EvalOptions& o, std::ostream& out, std::ostream& err)
    {
        const auto images = load_eval(o, err);
        EvalConfig cfg;
        cfg.kappas = o.common.kappas();
        cfg.window = o.common.window;
        cfg.jobs = o.common.jobs;
        const ApCurve curve = mean_ap(images, cfg);
        out << "metric OKS\n";
        out << "mAP " << num(curve.ap) << '\n';
        for (std::size_t t = 0; t < kNumOksThresholds; ++t)
            out << "AP@" << num(curve.thresholds[t], 2) << ' ' << num(curve.ap_per_threshold[t]) << '\n';
        out << "num_gt " << curve.num_gt << "\nnum_pred " << curve.num_pred << '\n';
        if (!o.report.empty()) {
            Json j = curve_json(curve);
            j["metric"] = "oks";
            write_file(o.report, j.dump(2) + "\n");
        }
        return kExitOk;
    }

    int cmd_exeval(const EvalOptions& o, std::ostream& out, std::ostream& err)
    {
        const auto images = load_eval(o, err);
        EvalConfig cfg;
        cfg.similarity = Similarity::ExOks;
        cfg.kappas = o.common.kappas();
        cfg.window = o.common.window;
        cfg.jobs = o.common.jobs;

        std::vector<double> thresholds;
        if (o.threshold) {
            if (!(*o.threshold >= 0.0 && *o.threshold <= 1.0))
                throw UsageError("--threshold must lie in [0, 1]");
            thresholds.push_back(*o.threshold);
        } else {
            for (int i = 0; i <= 20; ++i)
                thresholds.push_back(static_cast<double>(i) / 20.0);
        }

        Json sweep = Json::array();
        out << "metric Ex-OKS\nthreshold ExmAP\n";
        double best_t = thresholds.front();
        ApCurve best;
        best.ap = -1.0;
        for (double t : thresholds) {
            cfg.presence_threshold = t;
            const ApCurve c = mean_ap(images, cfg);
            out << num(t, 2) << ' ' << num(c.ap) << '\n';
            sweep.push_back({ { "threshold", t }, { "ExmAP", c.ap } });
            if (c.ap > best.ap) {
                best = c;
                best_t = t;
            }
        }
        out << "best_threshold " << num(best_t, 2) << '\n';
        out << "ExmAP " << num(best.ap) << '\n';
        for (std::size_t t = 0; t < kNumOksThresholds; ++t)
            out << "AP@" << num(best.thresholds[t], 2) << ' ' << num(best.ap_per_threshold[t]) << '\n';
        if (!o.report.empty()) {
            Json j = curve_json(best);
            j["metric"] = "ex-oks";
            j["best_threshold"] = best_t;
            j["sweep"] = std::move(sweep);
            write_file(o.report, j.dump(2) + "\n");
        }
        return kExitOk;
    }

    struct DecodeOptions {
        Common common;
        std::string pmap;
        std::string expert;
        std::string method = "expected-oks";
        std::optional<double> scale;
        long long image_id = 0;
        double presence_threshold = 0.5;
        std::string out;
    };

    int cmd_decode(const DecodeOptions& o, std::ostream& out, std::ostream& err)
    {
        const DecodeMethod method = decode_method_from_string(o.method);
        const PmapFile wide = read_pmap(read_file_bytes(o.pmap));
        std::optional<PmapFile> expert;
        if (method == DecodeMethod::DoubleHeatmap) {
            if (o.expert.empty())
                throw UsageError("--method double needs --expert");
            expert = read_pmap(read_file_bytes(o.expert));
            if (expert->keypoint_count() != wide.keypoint_count())
                throw Error(ErrorCode::InvalidArgument, "wide and expert PMAP files hold different keypoint counts");
        } else if (!o.expert.empty()) {
            log(err, "--expert is only used with --method double; ignoring it");
        }
        const std::size_t k_count = wide.keypoint_count();
        if (k_count > kNumKeypoints)
            throw Error(ErrorCode::InvalidArgument, "PMAP holds more than 17 keypoints");

        // Without an explicit scale, assume the window is the padded bbox and
        // use the COCO area-from-bbox rule.
        const Rect wr = wide.window_rect;
        const double padding = o.common.window.padding;
        const double scale = o.scale ? *o.scale : std::sqrt(0.53 * wr.area() / (padding * padding));
        if (!(scale > 0.0) || !std::isfinite(scale))
            throw UsageError("--scale must be positive");
        const KappaTable kappas = o.common.kappas();

        Prediction pred;
        pred.image_id = o.image_id;
        double score_sum = 0.0;
        out << "keypoint x y score presence refined expert\n";
        for (std::size_t k = 0; k < k_count; ++k) {
            const OksParams params { scale, kappas[k] };
            const ProbabilityMap map = wide.map(k);
            DecodedKeypoint d;
            bool used_expert = false;
            switch (method) {
            case DecodeMethod::Argmax: d = argmax_decode(map); break;
            case DecodeMethod::Udp: d = udp_decode(map); break;
            case DecodeMethod::ExpectedOks: d = expected_oks_decode(map, params); break;
            case DecodeMethod::DoubleHeatmap: {
                const FusedDecode f = fuse_double(map, expert->map(k), params, wide.presence[k], o.presence_threshold);
                d = f.keypoint;
                used_expert = f.used_expert;
                break;
            }
            }
            const double score = std::clamp(d.score, 0.0, 1.0);
            out << coco_keypoint_names()[k] << ' ' << num(d.location.x, 4) << ' ' << num(d.location.y, 4) << ' '
                << num(score) << ' ' << num(wide.presence[k]) << ' ' << (d.refined ? 1 : 0) << ' ' << (used_expert ? 1 : 0)
                << '\n';
            pred.keypoints[k] = d.location;
            pred.confidence[k] = score;
            pred.presence[k] = wide.presence[k];
            score_sum += score;
        }
        if (!o.out.empty()) {
            if (k_count != kNumKeypoints)
                throw Error(ErrorCode::InvalidArgument, "prediction JSON needs a 17-keypoint PMAP");
            pred.score = score_sum / static_cast<double>(k_count);
            PredictionDocument doc;
            PredictionEntry e;
            e.prediction = pred;
            e.pmap = o.pmap;
            doc.entries.push_back(std::move(e));
            write_file(o.out, serialize_predictions(doc));
        }
        return kExitOk;
    }

    struct CropOptions {
        Common common;
        std::string gt;
        std::string out;
        std::string manifest;
        std::optional<std::uint64_t> seed;
        std::vector<double> strength { 0.5, 0.9 };
    };

    int cmd_cropgen(const CropOptions& o, std::ostream& out, std::ostream& err)
    {
        if (!o.seed)
            throw UsageError("cropgen needs --seed");
        const GtDocument gt = load_gt(o.gt, err);
        const CropStrength strength { o.strength.at(0), o.strength.at(1) };
        try {
            strength.validate();
        } catch (const Error& e) {
            throw UsageError("--strength: " + std::string(e.what()));
        }
        const Cropset set = build_cropset(gt, strength, *o.seed, o.common.window, o.common.jobs);
        write_file(o.out, serialize_gt(set.document));
        if (!o.manifest.empty())
            write_file(o.manifest, manifest_csv(set.manifest));
        for (const auto& d : set.dropped)
            log(err, "dropped annotation id " + std::to_string(d.annotation_id) + " (image id "
                    + std::to_string(d.image_id) + "): no labeled keypoint inside the crop");
        out << "images " << set.document.images.size() << '\n';
        out << "instances_kept " << set.document.annotations.size() << '\n';
        out << "instances_dropped " << set.dropped.size() << '\n';
        static constexpr const char* names[] = { "A", "B", "C", "D", "E" };
        for (std::size_t a = 0; a < 5; ++a)
            out << names[a] << ' ' << num(set.domain[a], 2) << ' ' << set.area_counts[a] << '\n';
        return kExitOk;
    }

    struct CalibrateOptions {
        Common common;
        std::string gt;
        std::string pred;
        std::size_t synthetic = 0;
        std::size_t draws = 20;
        double corrupt = 1.0;
        std::optional<std::uint64_t> seed;
        double t_min = 0.25;
        double t_max = 4.0;
        std::size_t t_steps = 61;
        std::string histogram;
        std::string reliability;
        std::size_t bins = 10;
    };

    // Per image, prediction entries in the order assemble_eval_images uses.
    std::vector<std::vector<const PredictionEntry*>> entries_by_image(const GtDocument& gt, const PredictionDocument& preds)
    {
        std::map<long long, std::size_t> slot;
        for (std::size_t i = 0; i < gt.images.size(); ++i)
            slot[gt.images[i].id] = i;
        std::vector<std::vector<const PredictionEntry*>> out(gt.images.size());
        for (const auto& e : preds.entries)
            if (const auto it = slot.find(e.prediction.image_id); it != slot.end())
                out[it->second].push_back(&e);
        return out;
    }

    int cmd_calibrate(const CalibrateOptions& o, std::ostream& out, std::ostream& err)
    {
        std::vector<double> grid;
        if (o.t_steps == 61 && o.t_min == 0.25 && o.t_max == 4.0) {
            grid = default_temperature_grid();
        } else {
            if (!(o.t_min > 0.0 && o.t_min <= o.t_max) || o.t_steps < 1)
                throw UsageError("temperature grid needs 0 < t-min <= t-max and t-steps >= 1");
            for (std::size_t i = 0; i < o.t_steps; ++i)
                grid.push_back(o.t_steps == 1
                        ? o.t_min
                        : o.t_min * std::pow(o.t_max / o.t_min, static_cast<double>(i) / static_cast<double>(o.t_steps - 1)));
        }

        std::vector<MapSample> samples;
        std::vector<PresenceSample> presence;
        if (o.synthetic > 0) {
            if (!o.seed)
                throw UsageError("synthetic calibration needs --seed");
            SyntheticCoverageConfig cfg;
            cfg.maps = o.synthetic;
            cfg.draws_per_map = o.draws;
            cfg.corruption_temperature = o.corrupt;
            cfg.seed = *o.seed;
            samples = synthetic_coverage_samples(cfg);
        } else {
            if (o.gt.empty() || o.pred.empty())
                throw UsageError("calibrate needs --gt and --pred, or --synthetic");
            const GtDocument gt = load_gt(o.gt, err);
            const PredictionDocument preds = parse_predictions(read_file_text(o.pred));
            const auto images = assemble_eval_images(gt, preds);
            const auto entries = entries_by_image(gt, preds);
            const KappaTable kappas = o.common.kappas();
            std::map<std::string, std::shared_ptr<PmapFile>> cache;
            std::map<std::pair<std::string, std::size_t>, std::shared_ptr<const ProbabilityMap>> maps;
            std::size_t without_pmap = 0;
            for (std::size_t i = 0; i < images.size(); ++i) {
                for (const auto& [g, d] : match_instances(images[i], kappas)) {
                    const PredictionEntry& entry = *entries[i][d];
                    if (!entry.pmap) {
                        ++without_pmap;
                        continue;
                    }
                    fs::path path(*entry.pmap);
                    if (path.is_relative())
                        path = fs::path(o.pred).parent_path() / path;
                    auto& file = cache[path.string()];
                    if (!file)
                        file = std::make_shared<PmapFile>(read_pmap(read_file_bytes(path)));
                    if (file->keypoint_count() != kNumKeypoints)
                        throw Error(ErrorCode::InvalidArgument, path.string() + ": expected 17 maps");
                    const ActivationWindow window = file->window();
                    const GtInstance& gti = images[i].gts[g];
                    const auto flags = gt_presence(gti, window);
                    for (std::size_t k = 0; k < kNumKeypoints; ++k) {
                        if (!flags[k])
                            continue;
                        presence.push_back({ *flags[k], file->presence[k] });
                        GridCell cell;
                        if (!*flags[k] || !window.locate(gti.pose.keypoints[k].position, cell))
                            continue;
                        auto& m = maps[{ path.string(), k }];
                        if (!m)
                            m = std::make_shared<const ProbabilityMap>(file->map(k));
                        samples.push_back({ m, cell });
                    }
                }
            }
            if (without_pmap > 0)
                log(err, std::to_string(without_pmap) + " matched predictions carry no pmap reference");
        }
        if (samples.empty())
            throw Error(ErrorCode::InvalidArgument, "no keypoint falls inside a probability map");

        const TemperatureFit fit = fit_temperature(samples, grid, o.common.jobs);
        out << "samples " << samples.size() << '\n';
        out << "temperature " << num(fit.temperature) << '\n';
        out << "objective_before " << num(calibration_objective(fit.before), 8) << '\n';
        out << "objective_after " << num(calibration_objective(fit.after), 8) << '\n';
        out << "bin before after\n";
        for (std::size_t b = 0; b < kCoverageBins; ++b)
            out << num(0.05 * static_cast<double>(b + 1), 2) << ' ' << num(fit.before.fractions[b]) << ' '
                << num(fit.after.fractions[b]) << '\n';
        if (!o.histogram.empty())
            write_file(o.histogram, coverage_csv(fit.after));
        if (!presence.empty()) {
            const ReliabilityCurve curve = presence_reliability(presence, o.bins);
            out << "presence_samples " << curve.total << '\n';
            out << "presence_ece " << num(curve.ece) << '\n';
            if (!o.reliability.empty())
                write_file(o.reliability, reliability_csv(curve));
        }
        return kExitOk;
    }

    struct FitOptions {
        std::optional<double> x;
        std::optional<double> y;
        std::optional<std::uint64_t> seed;
        double alpha = 0.0;
        std::string keypoint = "left_eye";
        std::optional<double> kappa;
        double scale = 32.0;
        double step = 0.5;
        int iterations = 500;
        double cell = 1.0;
        int grid_w = 48;
        int grid_h = 64;
        std::string normalizer = "sparsemax";
        std::string kappa_path;
        std::string trace;
        std::string out;
    };

    int cmd_fit(const FitOptions& o, std::ostream& out, std::ostream&)
    {
        if (!(o.cell > 0.0) || !std::isfinite(o.cell))
            throw UsageError("--cell must be positive");
        FitConfig cfg;
        cfg.window = ActivationWindow({ 0.0, 0.0, o.grid_w * o.cell, o.grid_h * o.cell }, o.grid_w, o.grid_h);
        cfg.loss.alpha = o.alpha;
        cfg.step = o.step;
        cfg.iterations = o.iterations;
        cfg.normalizer = normalizer_from_string(o.normalizer);
        double kappa = 0.0;
        if (o.kappa) {
            kappa = *o.kappa;
        } else {
            const auto& names = coco_keypoint_names();
            const auto it = std::find(names.begin(), names.end(), o.keypoint);
            if (it == names.end())
                throw UsageError("unknown keypoint '" + o.keypoint + "'");
            const KappaTable table = o.kappa_path.empty() ? KappaTable::coco() : KappaTable::load(o.kappa_path);
            kappa = table[static_cast<std::size_t>(it - names.begin())];
        }
        cfg.oks = { o.scale, kappa };

        Point gt;
        if (o.x && o.y) {
            gt = { *o.x, *o.y };
        } else if (!o.x && !o.y && o.seed) {
            Rng rng(*o.seed);
            const Rect& r = cfg.window.rect();
            gt = { rng.uniform(r.x0 + 0.25 * r.width(), r.x0 + 0.75 * r.width()),
                rng.uniform(r.y0 + 0.25 * r.height(), r.y0 + 0.75 * r.height()) };
        } else {
            throw UsageError("fit needs both --x and --y, or --seed to draw a target");
        }
        cfg.seed = o.seed.value_or(0);

        const FitResult r = fit_map(gt, cfg);
        const FitReport& rep = r.report;
        out << "target " << num(gt.x, 4) << ' ' << num(gt.y, 4) << '\n';
        out << "normalizer " << to_string(cfg.normalizer) << '\n';
        out << "kappa " << num(kappa, 4) << " scale " << num(o.scale, 4) << " alpha " << num(o.alpha, 4) << '\n';
        out << "final_loss " << num(rep.final_loss.value, 8) << " risk " << num(rep.final_loss.risk, 8) << " regularizer "
            << num(rep.final_loss.regularizer, 8) << '\n';
        out << "decoded " << num(rep.decoded.x, 4) << ' ' << num(rep.decoded.y, 4) << '\n';
        out << "decoded_error_px " << num(rep.decoded_error_px, 4) << '\n';
        out << "support_size " << rep.support_size << '\n';
        out << "mass_within_sigma " << num(rep.mass_within_sigma) << '\n';
        out << "radius90 " << num(rep.radius90, 4) << '\n';
        out << "entropy " << num(rep.entropy) << '\n';
        out << "iterations " << rep.iterations_run << " converged " << (rep.converged ? 1 : 0) << '\n';
        if (!o.trace.empty())
            write_file(o.trace, loss_trace_csv(rep));
        if (!o.out.empty()) {
            const double presence = 1.0;
            write_file(o.out, write_pmap(PmapFile::from_maps(std::span(&r.map, 1), std::span(&presence, 1))));
        }
        return kExitOk;
    }

    struct SweepOptions {
        Common common;
        std::string samples;
        std::string gt;
        std::string pred;
        bool balanced = false;
        std::optional<std::uint64_t> seed;
        std::string out;
    };

    std::vector<PresenceSample> read_samples_csv(const std::string& path)
    {
        std::istringstream in(read_file_text(path));
        std::vector<PresenceSample> samples;
        std::string line;
        std::size_t line_no = 0;
        while (std::getline(in, line)) {
            ++line_no;
            if (!line.empty() && line.back() == '\r')
                line.pop_back();
            if (line.empty() || line[0] == '#')
                continue;
            const auto comma = line.find(',');
            if (comma == std::string::npos)
                throw Error(ErrorCode::SchemaViolation, path + ":" + std::to_string(line_no) + ": expected label,score");
            const std::string label = line.substr(0, comma);
            const std::string score = line.substr(comma + 1);
            if (line_no == 1 && !label.empty() && !std::isdigit(static_cast<unsigned char>(label[0])))
                continue;
            char* end = nullptr;
            const double s = std::strtod(score.c_str(), &end);
            if (end == score.c_str() || *end != '\0' || (label != "0" && label != "1"))
                throw Error(ErrorCode::SchemaViolation, path + ":" + std::to_string(line_no) + ": expected label,score");
            samples.push_back({ label == "1", s });
        }
        return samples;
    }

    void print_sweep(const std::string& source, const PresenceSweep& s, std::ostream& out)
    {
        out << "source " << source << '\n';
        out << "samples " << s.num_present + s.num_absent << " present " << s.num_present << " absent " << s.num_absent
            << '\n';
        out << "best_threshold " << num(s.best_threshold, 2) << " accuracy " << num(s.best_accuracy) << '\n';
        if (s.degenerate)
            out << "degenerate 1\n";
    }

    int cmd_sweep(const SweepOptions& o, std::ostream& out, std::ostream& err)
    {
        if (o.balanced && !o.seed)
            throw UsageError("--balanced needs --seed");
        const std::uint64_t seed = o.seed.value_or(0);
        std::vector<std::pair<std::string, PresenceSweep>> sweeps;
        if (!o.samples.empty()) {
            sweeps.emplace_back("samples", presence_sweep(read_samples_csv(o.samples), o.balanced, seed));
        } else {
            if (o.gt.empty() || o.pred.empty())
                throw UsageError("sweep needs --samples, or --gt and --pred");
            GtDocument gt;
            EvalOptions eo { o.common, o.gt, o.pred, {}, {} };
            const auto images = load_eval(eo, err, &gt);
            const KappaTable kappas = o.common.kappas();
            std::vector<PresenceSample> by_presence;
            std::vector<PresenceSample> by_confidence;
            for (const auto& img : images) {
                for (const auto& [g, d] : match_instances(img, kappas)) {
                    const GtInstance& gti = img.gts[g];
                    const Prediction& p = img.preds[d];
                    const auto flags = gt_presence(gti, window_from_bbox(gti.pose.bbox, img.extent, o.common.window));
                    for (std::size_t k = 0; k < kNumKeypoints; ++k) {
                        if (!flags[k])
                            continue;
                        by_presence.push_back({ *flags[k], p.presence[k] });
                        by_confidence.push_back({ *flags[k], p.confidence[k] });
                    }
                }
            }
            if (by_presence.empty())
                throw Error(ErrorCode::InvalidArgument, "no matched keypoints to sweep");
            sweeps.emplace_back("presence", presence_sweep(by_presence, o.balanced, seed));
            sweeps.emplace_back("confidence", presence_sweep(by_confidence, o.balanced, seed));
        }
        std::ostringstream csv;
        csv << "source,threshold,accuracy\n";
        for (const auto& [name, s] : sweeps) {
            print_sweep(name, s, out);
            for (const auto& pt : s.curve)
                csv << name << ',' << num(pt.threshold, 2) << ',' << num(pt.accuracy) << '\n';
        }
        if (!o.out.empty())
            write_file(o.out, csv.str());
        return kExitOk;
    }

    struct AreasOptions {
        Common common;
        std::string gt;
    };

    int cmd_areas(const AreasOptions& o, std::ostream& out, std::ostream& err)
    {
        const GtDocument gt = load_gt(o.gt, err);
        std::map<long long, ImageExtent> extents;
        for (const auto& img : gt.images)
            extents[img.id] = img.extent;
        std::vector<WindowedInstance> dataset;
        dataset.reserve(gt.annotations.size());
        for (const auto& ann : gt.annotations) {
            const PoseInstance& pose = ann.instance.pose;
            const ImageExtent extent = extents.at(pose.image_id);
            dataset.push_back({ pose, window_from_bbox(pose.bbox, extent, o.common.window), extent });
        }
        const auto counts = domain_counts(dataset);
        const auto pct = counts_to_percentages(counts);
        std::size_t total = 0;
        static constexpr const char* names[] = { "A", "B", "C", "D", "E" };
        for (std::size_t a = 0; a < 5; ++a) {
            out << names[a] << ' ' << num(pct[a], 2) << ' ' << counts[a] << '\n';
            total += counts[a];
        }
        out << "keypoints " << total << '\n';
        return kExitOk;
    }

    std::string trim(std::string s)
    {
        const auto b = s.find_first_not_of(" \t\r");
        const auto e = s.find_last_not_of(" \t\r");
        return b == std::string::npos ? std::string() : s.substr(b, e - b + 1);
    }

    // Moves `--config FILE` out of the arguments and splices the file's
    // key=value lines in as `--key=value` right after the subcommand, so
    // anything given on the command line (parsed later) wins.
    std::vector<std::string> expand_config(std::vector<std::string> args)
    {
        std::optional<std::string> path;
        for (std::size_t i = 0; i < args.size(); ++i) {
            if (args[i] == "--config") {
                if (i + 1 >= args.size())
                    throw UsageError("--config needs a file");
                path = args[i + 1];
                args.erase(args.begin() + static_cast<std::ptrdiff_t>(i), args.begin() + static_cast<std::ptrdiff_t>(i + 2));
                break;
            }
            if (args[i].rfind("--config=", 0) == 0) {
                path = args[i].substr(9);
                args.erase(args.begin() + static_cast<std::ptrdiff_t>(i));
                break;
            }
        }
        if (!path)
            return args;
        if (args.empty())
            throw UsageError("--config needs a subcommand");

        std::istringstream in(read_file_text(*path));
        std::vector<std::string> injected;
        std::string line;
        std::size_t line_no = 0;
        while (std::getline(in, line)) {
            ++line_no;
            line = trim(line);
            if (line.empty() || line[0] == '#')
                continue;
            const auto eq = line.find('=');
            const std::string key = eq == std::string::npos ? std::string() : trim(line.substr(0, eq));
            if (key.empty())
                throw UsageError(*path + ":" + std::to_string(line_no) + ": expected key=value");
            injected.push_back("--" + key + "=" + trim(line.substr(eq + 1)));
        }
        args.insert(args.begin() + 1, injected.begin(), injected.end());
        return args;
    }

} // namespace

int run(const std::vector<std::string>& raw_args, std::ostream& out, std::ostream& err)
{
    CLI::App app("Probability-map keypoint toolkit: evaluation, decoding, crops, calibration.\n"
                 "Every subcommand accepts --config FILE with key=value lines; flags override the file.",
        "probpose");
    app.option_defaults()->multi_option_policy(CLI::MultiOptionPolicy::TakeLast);
    app.require_subcommand(1);

    EvalOptions eval_o;
    auto* eval = app.add_subcommand("eval", "OKS mAP of predictions against ground truth");
    eval->add_option("--gt", eval_o.gt, "Ground-truth JSON")->required();
    eval->add_option("--pred", eval_o.pred, "Predictions JSON")->required();
    eval->add_option("--report", eval_o.report, "Write a JSON report here");
    add_common(eval, eval_o.common);

    EvalOptions exeval_o;
    auto* exeval = app.add_subcommand("exeval", "Ex-OKS Ex-mAP, sweeping the presence threshold");
    exeval->add_option("--gt", exeval_o.gt, "Ground-truth JSON")->required();
    exeval->add_option("--pred", exeval_o.pred, "Predictions JSON")->required();
    exeval->add_option("--report", exeval_o.report, "Write a JSON report here");
    exeval->add_option("--threshold", exeval_o.threshold, "Fixed presence threshold instead of the sweep");
    add_common(exeval, exeval_o.common);

    DecodeOptions decode_o;
    auto* decode = app.add_subcommand("decode", "Decode PMAP probability maps into keypoints");
    decode->add_option("--pmap", decode_o.pmap, "PMAP file (the wide window for --method double)")->required();
    decode->add_option("--expert", decode_o.expert, "Expert-window PMAP for --method double");
    decode->add_option("--method", decode_o.method, "argmax | udp | expected-oks | double");
    decode->add_option("--scale", decode_o.scale, "Object scale in pixels");
    decode->add_option("--image-id", decode_o.image_id, "Image id for the JSON output");
    decode->add_option("--presence-threshold", decode_o.presence_threshold, "Presence threshold")
        ->check(CLI::Range(0.0, 1.0));
    decode->add_option("--out", decode_o.out, "Write a predictions JSON here");
    add_common(decode, decode_o.common);

    CropOptions crop_o;
    auto* cropgen = app.add_subcommand("cropgen", "Randomly crop every image of a GT file");
    cropgen->add_option("--gt", crop_o.gt, "Input ground-truth JSON")->required();
    cropgen->add_option("--out", crop_o.out, "Output ground-truth JSON")->required();
    cropgen->add_option("--manifest", crop_o.manifest, "Crop manifest CSV");
    cropgen->add_option("--seed", crop_o.seed, "Random seed");
    cropgen->add_option("--strength", crop_o.strength, "Retained side fraction range min,max")
        ->expected(2)
        ->delimiter(',');
    add_common(cropgen, crop_o.common);

    CalibrateOptions cal_o;
    auto* calibrate = app.add_subcommand("calibrate", "Fit a map temperature and report calibration curves");
    calibrate->add_option("--gt", cal_o.gt, "Ground-truth JSON");
    calibrate->add_option("--pred", cal_o.pred, "Predictions JSON with pmap references");
    calibrate->add_option("--synthetic", cal_o.synthetic, "Use this many synthetic maps instead");
    calibrate->add_option("--draws", cal_o.draws, "Ground-truth draws per synthetic map")->check(CLI::PositiveNumber);
    calibrate->add_option("--corrupt", cal_o.corrupt, "Temperature applied to synthetic maps")->check(CLI::PositiveNumber);
    calibrate->add_option("--seed", cal_o.seed, "Random seed (synthetic mode)");
    calibrate->add_option("--t-min", cal_o.t_min, "Smallest temperature");
    calibrate->add_option("--t-max", cal_o.t_max, "Largest temperature");
    calibrate->add_option("--t-steps", cal_o.t_steps, "Log-spaced temperatures");
    calibrate->add_option("--histogram", cal_o.histogram, "Write the calibrated coverage histogram CSV here");
    calibrate->add_option("--reliability", cal_o.reliability, "Write the presence reliability CSV here");
    calibrate->add_option("--bins", cal_o.bins, "Presence reliability bins")->check(CLI::Range(2, 1000));
    add_common(calibrate, cal_o.common, false);

    FitOptions fit_o;
    auto* fit = app.add_subcommand("fit", "Fit one probability map to a target by gradient descent");
    fit->add_option("--x", fit_o.x, "Target x in window pixels");
    fit->add_option("--y", fit_o.y, "Target y in window pixels");
    fit->add_option("--seed", fit_o.seed, "Draw the target from this seed when --x/--y are absent");
    fit->add_option("--alpha", fit_o.alpha, "Regulariser weight")->check(CLI::Range(0.0, 1.0));
    fit->add_option("--keypoint", fit_o.keypoint, "COCO keypoint name selecting kappa");
    fit->add_option("--kappa", fit_o.kappa, "Explicit kappa")->check(CLI::PositiveNumber);
    fit->add_option("--kappa-table", fit_o.kappa_path, "Kappa table")->envname("PROBPOSE_KAPPA_TABLE");
    fit->add_option("--scale", fit_o.scale, "Object scale in pixels")->check(CLI::PositiveNumber);
    fit->add_option("--step", fit_o.step, "Initial step")->check(CLI::PositiveNumber);
    fit->add_option("--iterations", fit_o.iterations, "Iterations")->check(CLI::Range(1, 1000000));
    fit->add_option("--cell", fit_o.cell, "Cell size in pixels");
    fit->add_option("--grid-w", fit_o.grid_w, "Map columns")->check(CLI::Range(1, 4096));
    fit->add_option("--grid-h", fit_o.grid_h, "Map rows")->check(CLI::Range(1, 4096));
    fit->add_option("--normalizer", fit_o.normalizer, "sparsemax | softmax");
    fit->add_option("--trace", fit_o.trace, "Write the loss trace CSV here");
    fit->add_option("--out", fit_o.out, "Write the fitted map as PMAP here");

    SweepOptions sweep_o;
    auto* sweep = app.add_subcommand("sweep", "Accuracy of presence thresholds");
    sweep->add_option("--samples", sweep_o.samples, "CSV of label,score lines");
    sweep->add_option("--gt", sweep_o.gt, "Ground-truth JSON");
    sweep->add_option("--pred", sweep_o.pred, "Predictions JSON");
    sweep->add_flag("--balanced", sweep_o.balanced, "Subsample the majority class");
    sweep->add_option("--seed", sweep_o.seed, "Seed for --balanced");
    sweep->add_option("--out", sweep_o.out, "Write the curves CSV here");
    add_common(sweep, sweep_o.common);

    AreasOptions areas_o;
    auto* areas = app.add_subcommand("areas", "Percentages of keypoints in areas A-E");
    areas->add_option("--gt", areas_o.gt, "Ground-truth JSON")->required();
    add_common(areas, areas_o.common);

    try {
        std::vector<std::string> args = expand_config(raw_args);
        std::vector<const char*> argv { "probpose" };
        for (const auto& a : args)
            argv.push_back(a.c_str());
        try {
            app.parse(static_cast<int>(argv.size()), argv.data());
        } catch (const CLI::ParseError& e) {
            const int code = app.exit(e, out, err);
            return code == 0 ? kExitOk : kExitUsage;
        }

        if (eval->parsed())
            return cmd_eval(eval_o, out, err);
        if (exeval->parsed())
            return cmd_exeval(exeval_o, out, err);
        if (decode->parsed())
            return cmd_decode(decode_o, out, err);
        if (cropgen->parsed())
            return cmd_cropgen(crop_o, out, err);
        if (calibrate->parsed())
            return cmd_calibrate(cal_o, out, err);
        if (fit->parsed())
            return cmd_fit(fit_o, out, err);
        if (sweep->parsed())
            return cmd_sweep(sweep_o, out, err);
        if (areas->parsed())
            return cmd_areas(areas_o, out, err);
        return kExitUsage;
    } catch (const UsageError& e) {
        err << "error: " << e.what() << '\n';
        return kExitUsage;
    } catch (const Error& e) {
        err << "error: " << e.what() << '\n';
        return kExitData;
    } catch (const std::exception& e) {
        err << "error: " << e.what() << '\n';
        return kExitData;
    }
}

} // namespace probpose::cli
