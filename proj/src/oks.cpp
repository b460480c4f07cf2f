#include "probpose/oks.hpp"

#include "probpose/error.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>

namespace probpose {

void OksParams::validate() const
{
    if (!(scale > 0.0) || !std::isfinite(scale))
        throw Error(ErrorCode::InvalidArgument, "OKS object scale must be positive");
    if (!(kappa > 0.0) || !std::isfinite(kappa))
        throw Error(ErrorCode::InvalidArgument, "OKS kappa must be positive");
}

void LossConfig::validate() const
{
    if (!(alpha >= 0.0 && alpha <= 1.0))
        throw Error(ErrorCode::InvalidArgument, "loss alpha must lie in [0, 1]");
    if (!(sobel_epsilon > 0.0) || !std::isfinite(sobel_epsilon))
        throw Error(ErrorCode::InvalidArgument, "sobel epsilon must be positive");
}

const std::array<std::string_view, kNumKeypoints>& coco_keypoint_names()
{
    static const std::array<std::string_view, kNumKeypoints> names = { "nose", "left_eye", "right_eye", "left_ear",
        "right_ear", "left_shoulder", "right_shoulder", "left_elbow", "right_elbow", "left_wrist", "right_wrist",
        "left_hip", "right_hip", "left_knee", "right_knee", "left_ankle", "right_ankle" };
    return names;
}

KappaTable::KappaTable()
    : m_kappa { 0.052, 0.050, 0.050, 0.070, 0.070, 0.158, 0.158, 0.144, 0.144, 0.124, 0.124, 0.214, 0.214, 0.174,
        0.174, 0.178, 0.178 }
{
}

void KappaTable::set(std::size_t keypoint_type, double kappa)
{
    if (!(kappa > 0.0) || !std::isfinite(kappa))
        throw Error(ErrorCode::InvalidArgument, "kappa must be positive");
    m_kappa.at(keypoint_type) = kappa;
}

KappaTable KappaTable::parse(std::string_view text)
{
    KappaTable table;
    std::istringstream in { std::string(text) };
    std::string line;
    int line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (auto hash = line.find('#'); hash != std::string::npos)
            line.erase(hash);
        auto trim = [](std::string s) {
            const auto b = s.find_first_not_of(" \t\r");
            const auto e = s.find_last_not_of(" \t\r");
            return b == std::string::npos ? std::string() : s.substr(b, e - b + 1);
        };
        line = trim(line);
        if (line.empty())
            continue;
        const auto eq = line.find('=');
        if (eq == std::string::npos)
            throw Error(ErrorCode::SchemaViolation, "kappa table line " + std::to_string(line_no) + ": expected name=value");
        const std::string name = trim(line.substr(0, eq));
        const std::string value = trim(line.substr(eq + 1));
        const auto& names = coco_keypoint_names();
        const auto it = std::find(names.begin(), names.end(), name);
        if (it == names.end())
            throw Error(ErrorCode::SchemaViolation, "kappa table line " + std::to_string(line_no) + ": unknown keypoint '" + name + "'");
        double kappa = 0.0;
        std::size_t used = 0;
        try {
            kappa = std::stod(value, &used);
        } catch (const std::exception&) {
            used = 0;
        }
        if (used == 0 || used != value.size() || !(kappa > 0.0) || !std::isfinite(kappa))
            throw Error(ErrorCode::SchemaViolation, "kappa table line " + std::to_string(line_no) + ": bad value '" + value + "'");
        table.m_kappa[static_cast<std::size_t>(it - names.begin())] = kappa;
    }
    return table;
}

KappaTable KappaTable::load(const std::filesystem::path& path)
{
    std::ifstream in(path);
    if (!in)
        throw Error(ErrorCode::Io, "cannot open kappa table " + path.string());
    std::stringstream buffer;
    buffer << in.rdbuf();
    return parse(buffer.str());
}

std::string KappaTable::to_text() const
{
    std::ostringstream out;
    out.precision(17);
    for (std::size_t k = 0; k < kNumKeypoints; ++k)
        out << coco_keypoint_names()[k] << '=' << m_kappa[k] << '\n';
    return out.str();
}

double oks_similarity(double distance_px, const OksParams& params)
{
    const double s = params.sigma_px();
    return std::exp(-(distance_px * distance_px) / (2.0 * s * s));
}

int oks_kernel_radius(const OksParams& params, const ActivationWindow& window, double mass)
{
    params.validate();
    if (!(mass > 0.0 && mass < 1.0))
        throw Error(ErrorCode::InvalidArgument, "kernel mass must lie in (0, 1)");
    // Separable Gaussian: square half-width R holds erf(R / (sigma sqrt 2))^2.
    const double target = std::sqrt(mass);
    double lo = 0.0;
    double hi = 10.0;
    for (int i = 0; i < 200; ++i) {
        const double mid = 0.5 * (lo + hi);
        (std::erf(mid) < target ? lo : hi) = mid;
    }
    const double half_width_px = hi * params.sigma_px() * std::sqrt(2.0);
    const double cell = std::min(window.cell_w(), window.cell_h());
    return static_cast<int>(std::ceil(half_width_px / cell));
}

OksKernel oks_kernel(const OksParams& params, const ActivationWindow& window, int radius_cells)
{
    if (radius_cells < oks_kernel_radius(params, window))
        throw Error(ErrorCode::InvalidArgument,
            "kernel radius " + std::to_string(radius_cells) + " holds less than 0.999 of the OKS mass");
    OksKernel k;
    k.radius = radius_cells;
    k.values.resize(static_cast<std::size_t>(k.side()) * static_cast<std::size_t>(k.side()));
    for (int dy = -radius_cells; dy <= radius_cells; ++dy)
        for (int dx = -radius_cells; dx <= radius_cells; ++dx)
            k.values[static_cast<std::size_t>((dy + radius_cells) * k.side() + (dx + radius_cells))]
                = oks_similarity(std::hypot(dx * window.cell_w(), dy * window.cell_h()), params);
    return k;
}

std::vector<double> expected_oks_map(const ProbabilityMap& map, const OksParams& params)
{
    params.validate();
    const auto& window = map.window();
    const int w = window.grid_w();
    const int h = window.grid_h();
    const double s = params.sigma_px();
    const double denom = 2.0 * s * s;

    // exp(-(dx^2 + dy^2) / c) = exp(-dx^2 / c) exp(-dy^2 / c)
    std::vector<double> kx(static_cast<std::size_t>(w));
    std::vector<double> ky(static_cast<std::size_t>(h));
    for (int d = 0; d < w; ++d) {
        const double px = d * window.cell_w();
        kx[d] = std::exp(-(px * px) / denom);
    }
    for (int d = 0; d < h; ++d) {
        const double px = d * window.cell_h();
        ky[d] = std::exp(-(px * px) / denom);
    }

    const auto p = map.values();
    std::vector<double> rows(map.size(), 0.0);
    for (int r = 0; r < h; ++r)
        for (int c = 0; c < w; ++c) {
            double acc = 0.0;
            for (int c2 = 0; c2 < w; ++c2)
                acc += p[static_cast<std::size_t>(r * w + c2)] * kx[std::abs(c - c2)];
            rows[static_cast<std::size_t>(r * w + c)] = acc;
        }

    std::vector<double> out(map.size(), 0.0);
    for (int r = 0; r < h; ++r)
        for (int c = 0; c < w; ++c) {
            double acc = 0.0;
            for (int r2 = 0; r2 < h; ++r2)
                acc += rows[static_cast<std::size_t>(r2 * w + c)] * ky[std::abs(r - r2)];
            out[static_cast<std::size_t>(r * w + c)] = std::clamp(acc, 0.0, 1.0);
        }
    return out;
}

double expected_oks_at(const ProbabilityMap& map, const OksParams& params, Point image_point)
{
    params.validate();
    const auto p = map.values();
    double acc = 0.0;
    for (std::size_t i = 0; i < p.size(); ++i)
        if (p[i] > 0.0)
            acc += p[i] * oks_similarity(distance(image_point, map.window().cell_center(i)), params);
    return std::clamp(acc, 0.0, 1.0);
}

namespace {

    struct SobelField {
        std::vector<double> gx;
        std::vector<double> gy;
        std::vector<double> magnitude;
    };

    // Sobel weights indexed [row offset + 1][col offset + 1].
    constexpr double kSobelX[3][3] = { { -1, 0, 1 }, { -2, 0, 2 }, { -1, 0, 1 } };
    constexpr double kSobelY[3][3] = { { -1, -2, -1 }, { 0, 0, 0 }, { 1, 2, 1 } };

    SobelField sobel(std::span<const double> v, int w, int h, double eps)
    {
        SobelField f;
        f.gx.assign(v.size(), 0.0);
        f.gy.assign(v.size(), 0.0);
        f.magnitude.assign(v.size(), 0.0);
        for (int r = 0; r < h; ++r)
            for (int c = 0; c < w; ++c) {
                double gx = 0.0;
                double gy = 0.0;
                for (int a = -1; a <= 1; ++a)
                    for (int b = -1; b <= 1; ++b) {
                        const int rr = std::clamp(r + a, 0, h - 1);
                        const int cc = std::clamp(c + b, 0, w - 1);
                        const double x = v[static_cast<std::size_t>(rr * w + cc)];
                        gx += kSobelX[a + 1][b + 1] * x;
                        gy += kSobelY[a + 1][b + 1] * x;
                    }
                const auto i = static_cast<std::size_t>(r * w + c);
                f.gx[i] = gx;
                f.gy[i] = gy;
                f.magnitude[i] = std::sqrt(gx * gx + gy * gy + eps);
            }
        return f;
    }

    void check_loss_inputs(std::span<const double> values, const ActivationWindow& window, Point gt,
        const OksParams& params, const LossConfig& cfg)
    {
        params.validate();
        cfg.validate();
        if (values.size() != window.cells())
            throw Error(ErrorCode::InvalidArgument, "loss input size does not match the window grid");
        if (!window.rect().contains(gt))
            throw Error(ErrorCode::InvalidArgument,
                "ground truth outside the activation window; it trains presence, not the map");
    }

} // namespace

LossValue dense_oks_loss(std::span<const double> values, const ActivationWindow& window, Point gt,
    const OksParams& params, const LossConfig& cfg)
{
    check_loss_inputs(values, window, gt, params, cfg);
    LossValue out;
    for (std::size_t i = 0; i < values.size(); ++i)
        out.risk += (1.0 - oks_similarity(distance(window.cell_center(i), gt), params)) * values[i];
    const SobelField f = sobel(values, window.grid_w(), window.grid_h(), cfg.sobel_epsilon);
    for (double m : f.magnitude)
        out.regularizer += m;
    out.value = (1.0 - cfg.alpha) * out.risk + cfg.alpha * out.regularizer;
    return out;
}

LossValue dense_oks_loss(const ProbabilityMap& map, Point gt, const OksParams& params, const LossConfig& cfg)
{
    return dense_oks_loss(map.values(), map.window(), gt, params, cfg);
}

std::vector<double> dense_oks_loss_grad(std::span<const double> values, const ActivationWindow& window, Point gt,
    const OksParams& params, const LossConfig& cfg)
{
    check_loss_inputs(values, window, gt, params, cfg);
    const int w = window.grid_w();
    const int h = window.grid_h();

    std::vector<double> grad(values.size());
    for (std::size_t i = 0; i < values.size(); ++i)
        grad[i] = (1.0 - cfg.alpha) * (1.0 - oks_similarity(distance(window.cell_center(i), gt), params));

    if (cfg.alpha > 0.0) {
        const SobelField f = sobel(values, w, h, cfg.sobel_epsilon);
        // Adjoint of the replicate-padded Sobel stencil.
        for (int r = 0; r < h; ++r)
            for (int c = 0; c < w; ++c) {
                const auto i = static_cast<std::size_t>(r * w + c);
                const double sx = cfg.alpha * f.gx[i] / f.magnitude[i];
                const double sy = cfg.alpha * f.gy[i] / f.magnitude[i];
                for (int a = -1; a <= 1; ++a)
                    for (int b = -1; b <= 1; ++b) {
                        const int rr = std::clamp(r + a, 0, h - 1);
                        const int cc = std::clamp(c + b, 0, w - 1);
                        grad[static_cast<std::size_t>(rr * w + cc)]
                            += sx * kSobelX[a + 1][b + 1] + sy * kSobelY[a + 1][b + 1];
                    }
            }
    }
    return grad;
}

std::vector<double> dense_oks_loss_grad(const ProbabilityMap& map, Point gt, const OksParams& params,
    const LossConfig& cfg)
{
    return dense_oks_loss_grad(map.values(), map.window(), gt, params, cfg);
}

} // namespace probpose
