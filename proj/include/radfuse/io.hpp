#pragma once

#include <array>
#include <bit>
#include <charconv>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <map>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "radfuse/error.hpp"
#include "radfuse/grid.hpp"
#include "radfuse/occupancy.hpp"
#include "radfuse/tensor.hpp"

static_assert(std::endian::native == std::endian::little, "binary formats assume a little-endian host");

namespace radfuse::io {

namespace fs = std::filesystem;

inline std::string read_file(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    require(static_cast<bool>(in), "cannot open " + path.string());
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

inline void write_file(const fs::path& path, const std::string& bytes) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    require(static_cast<bool>(out), "cannot write " + path.string());
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    require(static_cast<bool>(out), "write failed for " + path.string());
}

// Shortest text that parses back to the same double.
inline std::string format_double(double v) {
    std::array<char, 64> buf{};
    auto res = std::to_chars(buf.data(), buf.data() + buf.size(), v);
    return std::string(buf.data(), res.ptr);
}

inline double parse_double(const std::string& s, const std::string& what) {
    double v = 0;
    const char* b = s.data();
    const char* e = s.data() + s.size();
    while (b < e && *b == ' ') ++b;
    while (e > b && (e[-1] == ' ' || e[-1] == '\r')) --e;
    if (b < e && *b == '+') ++b;
    auto res = std::from_chars(b, e, v);
    require(res.ec == std::errc() && res.ptr == e && b != e, what + ": '" + s + "' is not a number");
    return v;
}

template <typename V>
V parse_integer(const std::string& s, const std::string& what) {
    V v{};
    const char* b = s.data();
    const char* e = s.data() + s.size();
    while (b < e && *b == ' ') ++b;
    while (e > b && (e[-1] == ' ' || e[-1] == '\r')) --e;
    if (b < e && *b == '+') ++b;
    auto res = std::from_chars(b, e, v);
    require(res.ec != std::errc::result_out_of_range, what + ": '" + s + "' is out of range");
    require(res.ec == std::errc() && res.ptr == e && b != e, what + ": '" + s + "' is not an integer");
    return v;
}

// ---------------------------------------------------------------------------
// BFG1: "BFG1", u32 C, Z, H, W, then C*Z*H*W float32, all little-endian.

namespace detail {
inline void put_u32(std::string& out, std::uint32_t v) {
    char b[4];
    std::memcpy(b, &v, 4);
    out.append(b, 4);
}
inline void put_f32(std::string& out, float v) {
    char b[4];
    std::memcpy(b, &v, 4);
    out.append(b, 4);
}

class Reader {
public:
    Reader(const std::string& bytes, std::string what) : bytes_(bytes), what_(std::move(what)) {}
    std::uint32_t u32() {
        need(4);
        std::uint32_t v;
        std::memcpy(&v, bytes_.data() + pos_, 4);
        pos_ += 4;
        return v;
    }
    float f32() {
        need(4);
        float v;
        std::memcpy(&v, bytes_.data() + pos_, 4);
        pos_ += 4;
        return v;
    }
    std::string take(std::size_t n) {
        need(n);
        auto s = bytes_.substr(pos_, n);
        pos_ += n;
        return s;
    }
    bool done() const { return pos_ == bytes_.size(); }
    std::size_t remaining() const { return bytes_.size() - pos_; }

private:
    void need(std::size_t n) const { require(bytes_.size() - pos_ >= n, what_ + ": truncated file"); }
    const std::string& bytes_;
    std::string what_;
    std::size_t pos_ = 0;
};
} // namespace detail

inline std::string encode_bfg(const Volume<float>& v) {
    std::string out = "BFG1";
    out.reserve(20 + 4 * v.size());
    for (auto d : {v.channels(), v.depth(), v.height(), v.width()}) detail::put_u32(out, static_cast<std::uint32_t>(d));
    for (float x : v.data()) detail::put_f32(out, x);
    return out;
}

inline Volume<float> decode_bfg(const std::string& bytes, const std::string& what = "BFG1") {
    detail::Reader r(bytes, what);
    require(r.take(4) == "BFG1", what + ": bad magic (expected BFG1)");
    const auto c = r.u32(), z = r.u32(), h = r.u32(), w = r.u32();
    require(c >= 1 && z >= 1 && h >= 1 && w >= 1, what + ": zero dimension");
    const std::uint64_t n = std::uint64_t(c) * z * h * w;
    require(r.remaining() == 4 * n, what + ": payload size does not match header " + std::to_string(c) + "x" +
                                        std::to_string(z) + "x" + std::to_string(h) + "x" + std::to_string(w));
    Volume<float> v(c, z, h, w);
    for (auto& x : v.data()) x = r.f32();
    return v;
}

inline void write_bfg(const fs::path& path, const Volume<float>& v) { write_file(path, encode_bfg(v)); }
inline Volume<float> read_bfg(const fs::path& path) { return decode_bfg(read_file(path), path.string()); }

// Occupancy volumes are 1 x Z x H x W with ids stored as floats.
inline Volume<float> occupancy_to_volume(const OccupancyVolume& occ) {
    Volume<float> v(1, occ.depth, occ.height, occ.width);
    for (std::size_t i = 0; i < occ.voxels(); ++i) v.data()[i] = static_cast<float>(occ.labels[i]);
    return v;
}

inline OccupancyVolume occupancy_from_volume(const Volume<float>& v, int num_classes) {
    require(v.channels() == 1, "occupancy volume file must have C = 1, found C = " + std::to_string(v.channels()));
    OccupancyVolume occ(v.depth(), v.height(), v.width(), num_classes);
    for (std::size_t i = 0; i < occ.voxels(); ++i) {
        const float x = v.data()[i];
        require(x == std::floor(x) && x >= 0 && x <= static_cast<float>(num_classes),
                "occupancy volume: value " + format_double(x) + " is not a class id in [0, " +
                    std::to_string(num_classes) + "]");
        occ.labels[i] = static_cast<std::int32_t>(x);
    }
    return occ;
}

// ---------------------------------------------------------------------------
// Radar point CSV: header x,y,z,rcs,vx,vy.

inline std::vector<RadarPoint> parse_points_csv(const std::string& text, const std::string& what = "points CSV") {
    std::vector<RadarPoint> pts;
    std::istringstream in(text);
    std::string line;
    std::size_t lineno = 0;
    bool header = false;
    while (std::getline(in, line)) {
        ++lineno;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        if (!header) {
            require(line == "x,y,z,rcs,vx,vy", what + ": line " + std::to_string(lineno) +
                                                    ": expected header 'x,y,z,rcs,vx,vy'");
            header = true;
            continue;
        }
        std::vector<std::string> fields;
        std::stringstream ls(line);
        std::string f;
        while (std::getline(ls, f, ',')) fields.push_back(f);
        if (!line.empty() && line.back() == ',') fields.emplace_back();
        require(fields.size() == 6, what + ": line " + std::to_string(lineno) + ": expected 6 fields, found " +
                                        std::to_string(fields.size()));
        std::array<double, 6> v{};
        for (int k = 0; k < 6; ++k)
            v[static_cast<std::size_t>(k)] = parse_double(fields[static_cast<std::size_t>(k)],
                                                          what + ": line " + std::to_string(lineno));
        RadarPoint p{v[0], v[1], v[2], v[3], v[4], v[5]};
        require(p.finite(), what + ": line " + std::to_string(lineno) + ": non-finite value");
        pts.push_back(p);
    }
    return pts;
}

inline std::string format_points_csv(const std::vector<RadarPoint>& pts) {
    std::string out = "x,y,z,rcs,vx,vy\n";
    for (const auto& p : pts) {
        out += format_double(p.x) + "," + format_double(p.y) + "," + format_double(p.z) + "," + format_double(p.rcs) +
               "," + format_double(p.vx) + "," + format_double(p.vy) + "\n";
    }
    return out;
}

inline std::vector<RadarPoint> read_points_csv(const fs::path& path) {
    return parse_points_csv(read_file(path), path.string());
}

// ---------------------------------------------------------------------------
// key=value text. Lines starting with '#' are comments. Every key must be
// consumed; leftovers are reported by `finish`.

class KeyValues {
public:
    KeyValues() = default;

    static KeyValues parse(const std::string& text, const std::string& what) {
        KeyValues kv;
        kv.what_ = what;
        std::istringstream in(text);
        std::string line;
        std::size_t lineno = 0;
        while (std::getline(in, line)) {
            ++lineno;
            if (!line.empty() && line.back() == '\r') line.pop_back();
            const auto first = line.find_first_not_of(" \t");
            if (first == std::string::npos || line[first] == '#') continue;
            const auto eq = line.find('=');
            require(eq != std::string::npos, what + ": line " + std::to_string(lineno) + ": expected key=value");
            auto key = trim(line.substr(0, eq));
            auto value = trim(line.substr(eq + 1));
            require(!key.empty(), what + ": line " + std::to_string(lineno) + ": empty key");
            require(!kv.values_.contains(key), what + ": duplicate key '" + key + "'");
            kv.values_[key] = value;
            kv.order_.push_back(key);
        }
        return kv;
    }

    static KeyValues load(const fs::path& path) { return parse(read_file(path), path.string()); }

    bool has(const std::string& key) const { return values_.contains(key); }

    std::string str(const std::string& key) {
        auto it = values_.find(key);
        require(it != values_.end(), what_ + ": missing key '" + key + "'");
        used_.insert(key);
        return it->second;
    }

    template <typename V>
    void read(const std::string& key, V& target) {
        if (!has(key)) return;
        const auto s = str(key);
        if constexpr (std::is_same_v<V, bool>) {
            require(s == "true" || s == "false" || s == "1" || s == "0", what_ + ": '" + key + "' must be a boolean");
            target = (s == "true" || s == "1");
        } else if constexpr (std::is_same_v<V, std::string>) {
            target = s;
        } else if constexpr (std::is_integral_v<V>) {
            require(std::is_signed_v<V> || s.find('-') == std::string::npos, what_ + ": '" + key + "' must be >= 0");
            target = parse_integer<V>(s, what_ + ": '" + key + "'");
        } else {
            target = static_cast<V>(parse_double(s, what_ + ": '" + key + "'"));
        }
    }

    void finish() const {
        for (const auto& k : order_)
            require(used_.contains(k), what_ + ": unknown key '" + k + "'");
    }

private:
    static std::string trim(const std::string& s) {
        const auto b = s.find_first_not_of(" \t");
        if (b == std::string::npos) return {};
        const auto e = s.find_last_not_of(" \t");
        return s.substr(b, e - b + 1);
    }

    std::string what_;
    std::map<std::string, std::string> values_;
    std::vector<std::string> order_;
    std::set<std::string> used_;
};

/// Ordered key=value writer.
class KeyValueWriter {
public:
    template <typename V>
    KeyValueWriter& add(const std::string& key, const V& v) {
        if constexpr (std::is_same_v<V, bool>)
            text_ += key + "=" + (v ? "true" : "false") + "\n";
        else if constexpr (std::is_convertible_v<V, std::string>)
            text_ += key + "=" + std::string(v) + "\n";
        else if constexpr (std::is_integral_v<V>)
            text_ += key + "=" + std::to_string(v) + "\n";
        else
            text_ += key + "=" + format_double(static_cast<double>(v)) + "\n";
        return *this;
    }
    const std::string& str() const { return text_; }

private:
    std::string text_;
};

// ---------------------------------------------------------------------------
// Grid spec files: x_min, x_max, y_min, y_max, cell_size.

inline GridSpec read_grid_spec(KeyValues& kv, const GridSpec& fallback) {
    double x0 = fallback.x_min, x1 = fallback.x_max, y0 = fallback.y_min, y1 = fallback.y_max, cs = fallback.cell_size;
    kv.read("x_min", x0);
    kv.read("x_max", x1);
    kv.read("y_min", y0);
    kv.read("y_max", y1);
    kv.read("cell_size", cs);
    return GridSpec::make(x0, x1, y0, y1, cs);
}

inline void write_grid_spec(KeyValueWriter& w, const GridSpec& g) {
    w.add("x_min", g.x_min).add("x_max", g.x_max).add("y_min", g.y_min).add("y_max", g.y_max).add("cell_size", g.cell_size);
}

// ---------------------------------------------------------------------------
// Checkpoint container: "RFCK", u32 version (1), u32 section count, then per
// section: u32 name length, name bytes, u32 rank, rank x u32 dims, float32
// values. Sections keep file order.

struct Section {
    std::string name;
    std::vector<std::uint32_t> dims;
    std::vector<float> values;
};

inline std::string encode_checkpoint(const std::vector<Section>& sections) {
    std::string out = "RFCK";
    detail::put_u32(out, 1);
    detail::put_u32(out, static_cast<std::uint32_t>(sections.size()));
    for (const auto& s : sections) {
        std::uint64_t n = 1;
        for (auto d : s.dims) n *= d;
        require(n == s.values.size(), "checkpoint: section " + s.name + " dims do not match its value count");
        detail::put_u32(out, static_cast<std::uint32_t>(s.name.size()));
        out += s.name;
        detail::put_u32(out, static_cast<std::uint32_t>(s.dims.size()));
        for (auto d : s.dims) detail::put_u32(out, d);
        for (float v : s.values) detail::put_f32(out, v);
    }
    return out;
}

inline std::vector<Section> decode_checkpoint(const std::string& bytes, const std::string& what = "checkpoint") {
    detail::Reader r(bytes, what);
    require(r.take(4) == "RFCK", what + ": bad magic (expected RFCK)");
    require(r.u32() == 1, what + ": unsupported version");
    const auto count = r.u32();
    std::vector<Section> out;
    for (std::uint32_t i = 0; i < count; ++i) {
        Section s;
        s.name = r.take(r.u32());
        const auto rank = r.u32();
        require(rank <= 8, what + ": implausible rank in section " + s.name);
        std::uint64_t n = 1;
        for (std::uint32_t k = 0; k < rank; ++k) {
            s.dims.push_back(r.u32());
            n *= s.dims.back();
        }
        require(4 * n <= r.remaining(), what + ": truncated section " + s.name);
        s.values.resize(n);
        for (auto& v : s.values) v = r.f32();
        out.push_back(std::move(s));
    }
    require(r.done(), what + ": trailing bytes");
    return out;
}

inline std::string dims_string(const std::vector<std::uint32_t>& dims) {
    std::string s;
    for (std::size_t i = 0; i < dims.size(); ++i) s += (i ? "x" : "") + std::to_string(dims[i]);
    return s.empty() ? "scalar" : s;
}

// ---------------------------------------------------------------------------
// Metrics reports.

inline std::string format_report_kv(const MetricsReport& rep) {
    KeyValueWriter w;
    w.add("miou", rep.miou).add("miou_dynamic", rep.miou_dynamic);
    w.add("evaluated_classes", rep.evaluated).add("evaluated_dynamic_classes", rep.evaluated_dynamic);
    for (const auto& c : rep.per_class) {
        w.add("intersection." + c.name, c.intersection).add("union." + c.name, c.union_);
        if (c.iou) w.add("iou." + c.name, *c.iou);
    }
    return w.str();
}

inline std::string fixed(double v, int digits) {
    std::ostringstream s;
    s << std::fixed << std::setprecision(digits) << v;
    return s.str();
}

inline std::string format_gain(const Gain& g) {
    return (g.absolute >= 0 ? "+" : "") + fixed(g.absolute, 2) + " (" + fixed(g.percent, 2) + "%)";
}

/// Aligned-column table. IoU values are printed as percentages.
inline std::string format_report_table(const MetricsReport& rep) {
    std::ostringstream s;
    s << std::left << std::setw(22) << "class" << std::right << std::setw(14) << "intersection" << std::setw(12)
      << "union" << std::setw(10) << "IoU" << "\n";
    for (const auto& c : rep.per_class) {
        s << std::left << std::setw(22) << c.name << std::right << std::setw(14) << c.intersection << std::setw(12)
          << c.union_ << std::setw(10) << (c.iou ? fixed(100.0 * *c.iou, 2) : std::string("n/a")) << "\n";
    }
    s << std::left << std::setw(22) << "mIoU" << std::right << std::setw(36)
      << (std::isnan(rep.miou) ? std::string("n/a") : fixed(100.0 * rep.miou, 2)) << "\n";
    s << std::left << std::setw(22) << "mIoU_d" << std::right << std::setw(36)
      << (std::isnan(rep.miou_dynamic) ? std::string("n/a") : fixed(100.0 * rep.miou_dynamic, 2)) << "\n";
    return s.str();
}

// ---------------------------------------------------------------------------
// Images.

inline std::string encode_pgm(std::size_t width, std::size_t height, const std::vector<std::uint8_t>& pixels) {
    require(pixels.size() == width * height, "pgm: pixel count mismatch");
    std::string out = "P5\n" + std::to_string(width) + " " + std::to_string(height) + "\n255\n";
    out.append(reinterpret_cast<const char*>(pixels.data()), pixels.size());
    return out;
}

inline std::string encode_ppm(std::size_t width, std::size_t height, const std::vector<std::uint8_t>& rgb) {
    require(rgb.size() == 3 * width * height, "ppm: pixel count mismatch");
    std::string out = "P6\n" + std::to_string(width) + " " + std::to_string(height) + "\n255\n";
    out.append(reinterpret_cast<const char*>(rgb.data()), rgb.size());
    return out;
}

// Class palette; ids past the table wrap around.
inline std::array<std::uint8_t, 3> palette(int id) {
    static constexpr std::array<std::array<std::uint8_t, 3>, 12> kColors{{
        {0, 0, 0},       {230, 25, 75},  {60, 180, 75},  {255, 225, 25}, {0, 130, 200},  {245, 130, 48},
        {145, 30, 180},  {70, 240, 240}, {240, 50, 230}, {210, 245, 60}, {250, 190, 212}, {0, 128, 128},
    }};
    return kColors[static_cast<std::size_t>(id < 0 ? 0 : id) % kColors.size()];
}

} // namespace radfuse::io
