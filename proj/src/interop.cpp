#include "probpose/interop.hpp"

#include "probpose/error.hpp"

#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <limits>
#include <map>
#include <set>
#include <sstream>

namespace probpose {

static_assert(std::numeric_limits<float>::is_iec559 && std::numeric_limits<double>::is_iec559);

const GtImage* GtDocument::find_image(long long id) const
{
    for (const auto& img : images)
        if (img.id == id)
            return &img;
    return nullptr;
}

namespace {

    [[noreturn]] void schema(const std::string& where, const std::string& what)
    {
        throw Error(ErrorCode::SchemaViolation, where + ": " + what);
    }

    const Json& field(const Json& obj, const char* key, const std::string& where)
    {
        const auto it = obj.find(key);
        if (it == obj.end())
            schema(where, std::string("missing field '") + key + "'");
        return *it;
    }

    double as_number(const Json& v, const std::string& where, const char* what)
    {
        if (!v.is_number())
            schema(where, std::string(what) + " must be a number");
        const double d = v.get<double>();
        if (!std::isfinite(d))
            schema(where, std::string(what) + " must be finite");
        return d;
    }

    long long as_integer(const Json& v, const std::string& where, const char* what)
    {
        if (v.is_number_integer())
            return v.get<long long>();
        if (v.is_number_unsigned()) {
            const auto u = v.get<unsigned long long>();
            if (u > static_cast<unsigned long long>(std::numeric_limits<long long>::max()))
                schema(where, std::string(what) + " out of range");
            return static_cast<long long>(u);
        }
        if (v.is_number_float()) {
            const double d = v.get<double>();
            if (std::isfinite(d) && d == std::floor(d) && std::abs(d) < 9.0e15)
                return static_cast<long long>(d);
        }
        schema(where, std::string(what) + " must be an integer");
    }

    const Json& as_array(const Json& v, std::size_t size, const std::string& where, const char* what)
    {
        if (!v.is_array())
            schema(where, std::string(what) + " must be an array");
        if (v.size() != size)
            schema(where, std::string(what) + " must have " + std::to_string(size) + " entries, found " + std::to_string(v.size()));
        return v;
    }

    Json without(const Json& obj, std::initializer_list<const char*> keys)
    {
        Json out = obj;
        for (const char* k : keys)
            out.erase(k);
        return out;
    }

    Json parse_json(std::string_view text)
    {
        try {
            return Json::parse(text.begin(), text.end());
        } catch (const nlohmann::json::exception& e) {
            throw Error(ErrorCode::MalformedJson, e.what());
        }
    }

    GtImage parse_image(const Json& j, std::size_t index)
    {
        std::string where = "image #" + std::to_string(index);
        if (!j.is_object())
            schema(where, "must be an object");
        GtImage img;
        img.id = as_integer(field(j, "id", where), where, "id");
        where = "image id " + std::to_string(img.id);
        const long long w = as_integer(field(j, "width", where), where, "width");
        const long long h = as_integer(field(j, "height", where), where, "height");
        if (w < 1 || h < 1 || w > std::numeric_limits<int>::max() || h > std::numeric_limits<int>::max())
            schema(where, "width and height must be positive");
        img.extent = { static_cast<int>(w), static_cast<int>(h) };
        img.extra = without(j, { "id", "width", "height" });
        return img;
    }

    GtAnnotation parse_annotation(const Json& j, std::size_t index)
    {
        std::string where = "annotation #" + std::to_string(index);
        if (!j.is_object())
            schema(where, "must be an object");
        GtAnnotation ann;
        PoseInstance& pose = ann.instance.pose;
        pose.id = as_integer(field(j, "id", where), where, "id");
        where = "annotation id " + std::to_string(pose.id);
        pose.image_id = as_integer(field(j, "image_id", where), where, "image_id");

        const Json& bbox = as_array(field(j, "bbox", where), 4, where, "bbox");
        double b[4];
        for (std::size_t i = 0; i < 4; ++i)
            b[i] = as_number(bbox[i], where, "bbox entry");
        if (!(b[2] > 0.0 && b[3] > 0.0))
            schema(where, "bbox width and height must be positive");
        pose.bbox = Rect::from_xywh(b[0], b[1], b[2], b[3]);

        if (const auto it = j.find("area"); it != j.end()) {
            pose.area = as_number(*it, where, "area");
            if (pose.area < 0.0)
                schema(where, "area must be nonnegative");
        }

        const Json& kps = as_array(field(j, "keypoints", where), 3 * kNumKeypoints, where, "keypoints");
        for (std::size_t k = 0; k < kNumKeypoints; ++k) {
            Keypoint& kp = pose.keypoints[k];
            kp.position = { as_number(kps[3 * k], where, "keypoint x"), as_number(kps[3 * k + 1], where, "keypoint y") };
            const long long v = as_integer(kps[3 * k + 2], where, "keypoint visibility");
            if (v < 0 || v > 2)
                schema(where, "keypoint visibility must be 0, 1 or 2");
            kp.visibility = static_cast<int>(v);
        }

        if (const auto it = j.find("presence"); it != j.end()) {
            const Json& pres = as_array(*it, kNumKeypoints, where, "presence");
            std::array<bool, kNumKeypoints> flags{};
            for (std::size_t k = 0; k < kNumKeypoints; ++k) {
                const long long p = as_integer(pres[k], where, "presence flag");
                if (p != 0 && p != 1)
                    schema(where, "presence flags must be 0 or 1");
                flags[k] = p == 1;
            }
            ann.instance.presence = flags;
        }
        ann.extra = without(j, { "id", "image_id", "bbox", "area", "keypoints", "presence" });
        return ann;
    }

    Json number_array(std::span<const double> values)
    {
        Json a = Json::array();
        for (double v : values)
            a.push_back(v);
        return a;
    }

} // namespace

GtDocument parse_gt(std::string_view text)
{
    const Json root = parse_json(text);
    try {
        if (!root.is_object())
            schema("document", "top level must be an object");
        GtDocument doc;
        const Json& images = field(root, "images", "document");
        const Json& annotations = field(root, "annotations", "document");
        if (!images.is_array() || !annotations.is_array())
            schema("document", "images and annotations must be arrays");

        std::set<long long> image_ids;
        for (std::size_t i = 0; i < images.size(); ++i) {
            doc.images.push_back(parse_image(images[i], i));
            if (!image_ids.insert(doc.images.back().id).second)
                schema("image id " + std::to_string(doc.images.back().id), "duplicate image id");
        }
        std::set<long long> ann_ids;
        for (std::size_t i = 0; i < annotations.size(); ++i) {
            GtAnnotation ann = parse_annotation(annotations[i], i);
            const std::string where = "annotation id " + std::to_string(ann.instance.pose.id);
            if (!image_ids.count(ann.instance.pose.image_id))
                schema(where, "refers to unknown image id " + std::to_string(ann.instance.pose.image_id));
            if (!ann_ids.insert(ann.instance.pose.id).second)
                doc.warnings.push_back(where + ": duplicate annotation id");
            if (const auto it = ann.extra.find("iscrowd"); it != ann.extra.end() && it->is_number() && it->get<double>() != 0.0)
                doc.warnings.push_back(where + ": crowd annotation evaluated like any other instance");
            doc.annotations.push_back(std::move(ann));
        }
        doc.extra = without(root, { "images", "annotations" });
        return doc;
    } catch (const nlohmann::json::exception& e) {
        throw Error(ErrorCode::SchemaViolation, e.what());
    }
}

std::string serialize_gt(const GtDocument& doc)
{
    Json root = Json::object();
    Json images = Json::array();
    for (const auto& img : doc.images) {
        Json j = Json::object();
        j["id"] = img.id;
        j["width"] = img.extent.width;
        j["height"] = img.extent.height;
        for (const auto& [k, v] : img.extra.items())
            j[k] = v;
        images.push_back(std::move(j));
    }
    Json annotations = Json::array();
    for (const auto& ann : doc.annotations) {
        const PoseInstance& pose = ann.instance.pose;
        Json j = Json::object();
        j["id"] = pose.id;
        j["image_id"] = pose.image_id;
        const double bbox[4] = { pose.bbox.x0, pose.bbox.y0, pose.bbox.width(), pose.bbox.height() };
        j["bbox"] = number_array(bbox);
        j["area"] = pose.area;
        Json kps = Json::array();
        for (const auto& kp : pose.keypoints) {
            kps.push_back(kp.position.x);
            kps.push_back(kp.position.y);
            kps.push_back(kp.visibility);
        }
        j["keypoints"] = std::move(kps);
        if (ann.instance.presence) {
            Json pres = Json::array();
            for (bool p : *ann.instance.presence)
                pres.push_back(p ? 1 : 0);
            j["presence"] = std::move(pres);
        }
        for (const auto& [k, v] : ann.extra.items())
            j[k] = v;
        annotations.push_back(std::move(j));
    }
    root["images"] = std::move(images);
    root["annotations"] = std::move(annotations);
    for (const auto& [k, v] : doc.extra.items())
        root[k] = v;
    return root.dump() + "\n";
}

PredictionDocument parse_predictions(std::string_view text)
{
    const Json root = parse_json(text);
    try {
        if (!root.is_array())
            schema("document", "predictions must be a top-level array");
        PredictionDocument doc;
        for (std::size_t i = 0; i < root.size(); ++i) {
            const Json& j = root[i];
            std::string where = "prediction #" + std::to_string(i);
            if (!j.is_object())
                schema(where, "must be an object");
            if (const auto it = j.find("id"); it != j.end() && it->is_number_integer())
                where = "prediction id " + std::to_string(it->get<long long>());

            PredictionEntry e;
            Prediction& p = e.prediction;
            p.image_id = as_integer(field(j, "image_id", where), where, "image_id");
            p.score = as_number(field(j, "score", where), where, "score");
            const Json& kps = as_array(field(j, "keypoints", where), 3 * kNumKeypoints, where, "keypoints");
            for (std::size_t k = 0; k < kNumKeypoints; ++k) {
                p.keypoints[k] = { as_number(kps[3 * k], where, "keypoint x"), as_number(kps[3 * k + 1], where, "keypoint y") };
                p.confidence[k] = as_number(kps[3 * k + 2], where, "keypoint confidence");
                if (p.confidence[k] < 0.0 || p.confidence[k] > 1.0)
                    schema(where, "keypoint confidence must lie in [0, 1]");
            }
            if (const auto it = j.find("presence"); it != j.end()) {
                const Json& pres = as_array(*it, kNumKeypoints, where, "presence");
                for (std::size_t k = 0; k < kNumKeypoints; ++k) {
                    p.presence[k] = as_number(pres[k], where, "presence");
                    if (p.presence[k] < 0.0 || p.presence[k] > 1.0)
                        schema(where, "presence must lie in [0, 1]");
                }
            } else {
                p.presence.fill(1.0);
            }
            if (const auto it = j.find("pmap"); it != j.end()) {
                if (!it->is_string())
                    schema(where, "pmap must be a string");
                e.pmap = it->get<std::string>();
            }
            e.extra = without(j, { "image_id", "score", "keypoints", "presence", "pmap" });
            doc.entries.push_back(std::move(e));
        }
        return doc;
    } catch (const nlohmann::json::exception& e) {
        throw Error(ErrorCode::SchemaViolation, e.what());
    }
}

std::string serialize_predictions(const PredictionDocument& doc)
{
    Json root = Json::array();
    for (const auto& e : doc.entries) {
        const Prediction& p = e.prediction;
        Json j = Json::object();
        j["image_id"] = p.image_id;
        j["score"] = p.score;
        Json kps = Json::array();
        for (std::size_t k = 0; k < kNumKeypoints; ++k) {
            kps.push_back(p.keypoints[k].x);
            kps.push_back(p.keypoints[k].y);
            kps.push_back(p.confidence[k]);
        }
        j["keypoints"] = std::move(kps);
        j["presence"] = number_array(p.presence);
        if (e.pmap)
            j["pmap"] = *e.pmap;
        for (const auto& [k, v] : e.extra.items())
            j[k] = v;
        root.push_back(std::move(j));
    }
    return root.dump() + "\n";
}

std::vector<EvalImage> assemble_eval_images(const GtDocument& gt, const PredictionDocument& preds)
{
    std::vector<EvalImage> images;
    std::map<long long, std::size_t> slot;
    for (const auto& img : gt.images) {
        slot[img.id] = images.size();
        images.push_back({ img.id, img.extent, {}, {} });
    }
    for (const auto& ann : gt.annotations)
        images[slot.at(ann.instance.pose.image_id)].gts.push_back(ann.instance);
    for (const auto& e : preds.entries)
        if (const auto it = slot.find(e.prediction.image_id); it != slot.end())
            images[it->second].preds.push_back(e.prediction);
    return images;
}

ActivationWindow PmapFile::window() const
{
    return { window_rect, static_cast<int>(grid_w), static_cast<int>(grid_h) };
}

ProbabilityMap PmapFile::map(std::size_t k) const
{
    const auto& src = maps.at(k);
    std::vector<double> values(src.begin(), src.end());
    double sum = 0.0;
    for (double v : values)
        sum += v;
    for (double& v : values)
        v /= sum;
    return { window(), std::move(values), static_cast<int>(k) };
}

PmapFile PmapFile::from_maps(std::span<const ProbabilityMap> maps, std::span<const double> presence)
{
    if (maps.size() != presence.size())
        throw Error(ErrorCode::InvalidArgument, "one presence value per map is required");
    PmapFile f;
    if (maps.empty())
        throw Error(ErrorCode::InvalidArgument, "from_maps needs at least one map to define the window");
    const ActivationWindow& w = maps.front().window();
    f.window_rect = w.rect();
    f.grid_w = static_cast<std::uint32_t>(w.grid_w());
    f.grid_h = static_cast<std::uint32_t>(w.grid_h());
    for (std::size_t k = 0; k < maps.size(); ++k) {
        if (!(maps[k].window() == w))
            throw Error(ErrorCode::InvalidArgument, "all maps in a PMAP file share one window");
        f.presence.push_back(static_cast<float>(PresenceProbability(presence[k]).value()));
        f.maps.emplace_back(maps[k].values().begin(), maps[k].values().end());
    }
    return f;
}

namespace {

    class ByteWriter {
    public:
        void u32(std::uint32_t v)
        {
            for (int i = 0; i < 4; ++i)
                m_bytes.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
        }
        void u64(std::uint64_t v)
        {
            for (int i = 0; i < 8; ++i)
                m_bytes.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
        }
        void f32(float v) { u32(std::bit_cast<std::uint32_t>(v)); }
        void f64(double v) { u64(std::bit_cast<std::uint64_t>(v)); }
        void raw(std::string_view s) { m_bytes.insert(m_bytes.end(), s.begin(), s.end()); }
        std::vector<std::uint8_t> take() { return std::move(m_bytes); }

    private:
        std::vector<std::uint8_t> m_bytes;
    };

    class ByteReader {
    public:
        explicit ByteReader(std::span<const std::uint8_t> bytes)
            : m_bytes(bytes)
        {
        }
        std::size_t remaining() const { return m_bytes.size() - m_pos; }
        void need(std::size_t n, const char* what) const
        {
            if (remaining() < n)
                throw Error(ErrorCode::Truncated, std::string("PMAP ends inside ") + what);
        }
        std::uint32_t u32(const char* what)
        {
            need(4, what);
            std::uint32_t v = 0;
            for (int i = 0; i < 4; ++i)
                v |= static_cast<std::uint32_t>(m_bytes[m_pos + i]) << (8 * i);
            m_pos += 4;
            return v;
        }
        std::uint64_t u64(const char* what)
        {
            need(8, what);
            std::uint64_t v = 0;
            for (int i = 0; i < 8; ++i)
                v |= static_cast<std::uint64_t>(m_bytes[m_pos + i]) << (8 * i);
            m_pos += 8;
            return v;
        }
        float f32(const char* what) { return std::bit_cast<float>(u32(what)); }
        double f64(const char* what) { return std::bit_cast<double>(u64(what)); }

    private:
        std::span<const std::uint8_t> m_bytes;
        std::size_t m_pos = 0;
    };

    void validate_pmap(const PmapFile& f)
    {
        if (f.grid_w == 0 || f.grid_h == 0 || f.grid_w > (1u << 16) || f.grid_h > (1u << 16))
            throw Error(ErrorCode::InvalidHeader, "PMAP grid must be between 1 and 65536 cells per side");
        try {
            (void)f.window();
        } catch (const Error& e) {
            throw Error(ErrorCode::InvalidHeader, std::string("PMAP window: ") + e.what());
        }
        if (f.presence.size() != f.maps.size())
            throw Error(ErrorCode::InvalidHeader, "PMAP presence count differs from map count");
        const std::size_t cells = static_cast<std::size_t>(f.grid_w) * f.grid_h;
        for (std::size_t k = 0; k < f.maps.size(); ++k) {
            const float p = f.presence[k];
            if (!(p >= 0.0f && p <= 1.0f))
                throw Error(ErrorCode::InvalidHeader, "PMAP presence " + std::to_string(k) + " outside [0, 1]");
            if (f.maps[k].size() != cells)
                throw Error(ErrorCode::InvalidHeader, "PMAP map " + std::to_string(k) + " has the wrong size");
            double sum = 0.0;
            for (float v : f.maps[k]) {
                if (!std::isfinite(v) || v < 0.0f)
                    throw Error(ErrorCode::NotNormalized, "PMAP map " + std::to_string(k) + " has a negative or non-finite value");
                sum += v;
            }
            if (std::abs(sum - 1.0) > 1e-5)
                throw Error(ErrorCode::NotNormalized, "PMAP map " + std::to_string(k) + " sums to " + std::to_string(sum));
        }
    }

} // namespace

PmapFile read_pmap(std::span<const std::uint8_t> bytes)
{
    if (bytes.size() < 4)
        throw Error(ErrorCode::Truncated, "PMAP shorter than its magic");
    if (std::memcmp(bytes.data(), "PMAP", 4) != 0)
        throw Error(ErrorCode::BadMagic, "not a PMAP file");
    ByteReader in(bytes.subspan(4));
    const std::uint32_t version = in.u32("version");
    if (version != kPmapVersion)
        throw Error(ErrorCode::UnsupportedVersion, "PMAP version " + std::to_string(version));
    const std::uint32_t count = in.u32("keypoint count");
    PmapFile f;
    f.grid_h = in.u32("grid height");
    f.grid_w = in.u32("grid width");
    f.window_rect.x0 = in.f64("window rect");
    f.window_rect.y0 = in.f64("window rect");
    f.window_rect.x1 = in.f64("window rect");
    f.window_rect.y1 = in.f64("window rect");
    if (f.grid_w == 0 || f.grid_h == 0 || f.grid_w > (1u << 16) || f.grid_h > (1u << 16))
        throw Error(ErrorCode::InvalidHeader, "PMAP grid must be between 1 and 65536 cells per side");

    const std::size_t cells = static_cast<std::size_t>(f.grid_w) * f.grid_h;
    // Check the payload size before allocating anything sized by the header.
    const unsigned __int128 payload = static_cast<unsigned __int128>(count) * 4u * (1u + cells);
    if (payload > in.remaining())
        throw Error(ErrorCode::Truncated, "PMAP payload shorter than the header announces");

    f.presence.resize(count);
    for (auto& p : f.presence)
        p = in.f32("presence");
    f.maps.resize(count);
    for (auto& m : f.maps) {
        m.resize(cells);
        for (auto& v : m)
            v = in.f32("values");
    }
    if (in.remaining() != 0)
        throw Error(ErrorCode::TrailingBytes, std::to_string(in.remaining()) + " bytes after the PMAP payload");
    validate_pmap(f);
    return f;
}

std::vector<std::uint8_t> write_pmap(const PmapFile& f)
{
    validate_pmap(f);
    ByteWriter out;
    out.raw("PMAP");
    out.u32(kPmapVersion);
    out.u32(static_cast<std::uint32_t>(f.maps.size()));
    out.u32(f.grid_h);
    out.u32(f.grid_w);
    out.f64(f.window_rect.x0);
    out.f64(f.window_rect.y0);
    out.f64(f.window_rect.x1);
    out.f64(f.window_rect.y1);
    for (float p : f.presence)
        out.f32(p);
    for (const auto& m : f.maps)
        for (float v : m)
            out.f32(v);
    return out.take();
}

std::vector<std::uint8_t> read_file_bytes(const std::filesystem::path& path)
{
    std::ifstream in(path, std::ios::binary);
    if (!in)
        throw Error(ErrorCode::Io, "cannot open " + path.string());
    return { std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>() };
}

std::string read_file_text(const std::filesystem::path& path)
{
    std::ifstream in(path, std::ios::binary);
    if (!in)
        throw Error(ErrorCode::Io, "cannot open " + path.string());
    std::ostringstream buffer;
    buffer << in.rdbuf();
    return buffer.str();
}

void write_file(const std::filesystem::path& path, std::span<const std::uint8_t> bytes)
{
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out)
        throw Error(ErrorCode::Io, "cannot write " + path.string());
    out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    if (!out)
        throw Error(ErrorCode::Io, "short write to " + path.string());
}

void write_file(const std::filesystem::path& path, std::string_view text)
{
    write_file(path, std::span(reinterpret_cast<const std::uint8_t*>(text.data()), text.size()));
}

} // namespace probpose
