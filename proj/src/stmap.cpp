#include "rppg/stmap.hpp"

#include <algorithm>
#include <bit>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

#include <json.hpp>

#include "rppg/binio.hpp"

namespace rppg::stmap {

namespace fs = std::filesystem;
using nlohmann::json;
using nlohmann::ordered_json;

void RoiTrace::validate() const {
    if (n_rois < 1) throw ContractError("trace needs at least one sub-ROI");
    if (n_rois > 12)
        throw ConfigError("n_rois = " + std::to_string(n_rois) +
                          " would need " + std::to_string((1u << n_rois) - 1) +
                          " map rows; 12 is the supported maximum");
    if (channels < 1) throw ContractError("trace needs at least one channel");
    if (!(fps > 0.0)) throw ContractError("trace fps must be positive");
    if (frames.empty() || frames.size() % (n_rois * channels) != 0)
        throw ContractError("trace of video " + std::to_string(video_id) +
                            " has " + std::to_string(frames.size()) +
                            " values, not a multiple of n_rois*channels");
    for (double v : frames)
        if (!std::isfinite(v))
            throw ContractError("trace of video " + std::to_string(video_id) +
                                " contains a non-finite value");
}

void ClipSpec::validate() const {
    if (clip_len < 2) throw ConfigError("clip length must be at least 2 frames");
    if (stride < 1 || stride >= clip_len)
        throw ConfigError("stride " + std::to_string(stride) +
                          " must satisfy 1 <= stride < clip length " +
                          std::to_string(clip_len) +
                          " so adjacent clips overlap");
    if (group_size < 2)
        throw ConfigError("group size k must be at least 2, got " +
                          std::to_string(group_size));
}

std::vector<std::size_t> segment_clips(const RoiTrace& trace, const ClipSpec& spec) {
    spec.validate();
    std::vector<std::size_t> starts;
    const std::size_t f = trace.frame_count();
    if (f < spec.clip_len) return starts;
    for (std::size_t s = 0; s + spec.clip_len <= f; s += spec.stride)
        starts.push_back(s);
    return starts;
}

SpatioTemporalMap build_map(const RoiTrace& trace, std::size_t start,
                            const ClipSpec& spec) {
    trace.validate();
    spec.validate();
    const std::size_t f = trace.frame_count();
    if (start + spec.clip_len > f)
        throw ContractError("clip [" + std::to_string(start) + ", " +
                            std::to_string(start + spec.clip_len) +
                            ") exceeds trace of " + std::to_string(f) + " frames");

    const std::size_t n = trace.n_rois;
    const std::size_t c = trace.channels;
    const std::size_t rows = (std::size_t{1} << n) - 1;

    SpatioTemporalMap map;
    map.video_id = trace.video_id;
    map.source_id = trace.source_id;
    map.clip_index = static_cast<std::uint32_t>(start / spec.stride);
    map.clip_len = spec.clip_len;
    map.rows = rows;
    map.channels = c;
    map.data.resize(spec.clip_len * rows * c);

    // Subset sums by dynamic programming over the lowest set bit: the sum for
    // a mask extends the sum for mask-without-lowest-bit by one ROI. Addition
    // order is a function of the mask alone, so identical frames give
    // bit-identical rows wherever clips overlap.
    std::vector<double> sums((rows + 1) * c, 0.0);
    for (std::size_t t = 0; t < spec.clip_len; ++t) {
        const std::size_t frame = start + t;
        for (std::size_t mask = 1; mask <= rows; ++mask) {
            const std::size_t low = mask & (~mask + 1);
            const std::size_t rest = mask ^ low;
            const std::size_t roi =
                static_cast<std::size_t>(std::countr_zero(low));
            for (std::size_t ch = 0; ch < c; ++ch)
                sums[mask * c + ch] = sums[rest * c + ch] + trace.at(frame, roi, ch);
        }
        for (std::size_t mask = 1; mask <= rows; ++mask) {
            const double inv = 1.0 / static_cast<double>(std::popcount(mask));
            for (std::size_t ch = 0; ch < c; ++ch)
                map.at(t, mask - 1, ch) = sums[mask * c + ch] * inv;
        }
    }
    return map;
}

SpatioTemporalMap normalize_map(const SpatioTemporalMap& map) {
    SpatioTemporalMap out = map;
    const std::size_t cells = map.clip_len * map.rows;
    for (std::size_t ch = 0; ch < map.channels; ++ch) {
        double lo = map.data[ch], hi = map.data[ch];
        for (std::size_t i = 0; i < cells; ++i) {
            double v = map.data[i * map.channels + ch];
            lo = std::min(lo, v);
            hi = std::max(hi, v);
        }
        if (hi > lo) {
            const double inv = 1.0 / (hi - lo);
            for (std::size_t i = 0; i < cells; ++i) {
                double& v = out.data[i * map.channels + ch];
                v = (v - lo) * inv;
            }
        } else {
            for (std::size_t i = 0; i < cells; ++i)
                out.data[i * map.channels + ch] = 0.5;
        }
    }
    return out;
}

std::vector<MapGroup> group_adjacent(const std::vector<SpatioTemporalMap>& maps,
                                     std::size_t k) {
    if (k < 2) throw ConfigError("group size k must be at least 2");
    std::vector<MapGroup> groups;
    if (maps.size() < k) return groups;
    for (std::size_t i = 0; i + 1 < maps.size(); ++i) {
        if (maps[i].clip_index > maps[i + 1].clip_index)
            throw ContractError("maps not sorted by clip index");
        if (maps[i].video_id != maps[i + 1].video_id)
            throw ContractError("maps of different videos in one grouping call");
    }
    std::vector<std::shared_ptr<const SpatioTemporalMap>> shared;
    shared.reserve(maps.size());
    for (const auto& m : maps)
        shared.push_back(std::make_shared<const SpatioTemporalMap>(m));
    for (std::size_t i = 0; i + k <= maps.size(); ++i) {
        bool consecutive = true;
        for (std::size_t j = 1; j < k; ++j)
            if (maps[i + j].clip_index != maps[i].clip_index + j ||
                !maps[i + j].same_shape(maps[i]))
                consecutive = false;
        if (!consecutive)
            throw ContractError(
                "clip indices of video " + std::to_string(maps[i].video_id) +
                " are not consecutive from clip " +
                std::to_string(maps[i].clip_index));
        MapGroup g;
        g.maps.assign(shared.begin() + static_cast<std::ptrdiff_t>(i),
                      shared.begin() + static_cast<std::ptrdiff_t>(i + k));
        g.label_t1 = g.label_t2 = maps[i].source_id;
        g.alpha = 1.0;
        groups.push_back(std::move(g));
    }
    return groups;
}

namespace {
constexpr char kMapMagic[4] = {'S', 'T', 'M', 'P'};
constexpr std::uint32_t kMapVersion = 1;
} // namespace

void write_map(const SpatioTemporalMap& map, const fs::path& path) {
    if (map.data.size() != map.clip_len * map.rows * map.channels)
        throw ContractError("map data size does not match its dimensions");
    std::ofstream os(path, std::ios::binary | std::ios::trunc);
    if (!os) throw IoError("cannot open " + path.string() + " for writing");
    binio::Writer w(os, path.string());
    w.bytes(kMapMagic, 4);
    w.u32(kMapVersion);
    w.u32(static_cast<std::uint32_t>(map.clip_len));
    w.u32(static_cast<std::uint32_t>(map.rows));
    w.u32(static_cast<std::uint32_t>(map.channels));
    w.u32(map.video_id);
    w.u32(map.source_id);
    w.u32(map.clip_index);
    w.f64_array(map.data.data(), map.data.size());
    os.flush();
    if (!os) throw IoError("flush failed for " + path.string());
}

SpatioTemporalMap read_map(const fs::path& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw IoError("cannot open " + path.string() + " for reading");
    binio::Reader r(is, path.string());
    r.magic(kMapMagic, "spatial-temporal map");
    std::uint32_t version = r.u32("version");
    if (version != kMapVersion)
        throw FormatError(path.string() + ": unsupported map version " +
                          std::to_string(version) + " at offset 4");
    SpatioTemporalMap map;
    map.clip_len = r.u32("clip length");
    map.rows = r.u32("row count");
    map.channels = r.u32("channel count");
    map.video_id = r.u32("video id");
    map.source_id = r.u32("source id");
    map.clip_index = r.u32("clip index");
    if (map.clip_len == 0 || map.rows == 0 || map.channels == 0 ||
        map.clip_len > (1u << 20) || map.rows > (1u << 20) ||
        map.channels > (1u << 10))
        throw FormatError(path.string() + ": implausible dimensions " +
                          std::to_string(map.clip_len) + "x" +
                          std::to_string(map.rows) + "x" +
                          std::to_string(map.channels) + " in header");
    map.data.resize(map.clip_len * map.rows * map.channels);
    r.f64_array(map.data.data(), map.data.size(), "map payload");
    if (!r.at_eof())
        throw FormatError(path.string() + ": trailing data at offset " +
                          std::to_string(r.offset()));
    return map;
}

namespace {

std::string format_double(double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

double parse_double(std::string_view s, const std::string& where) {
    double v = 0.0;
    auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (ec != std::errc{} || p != s.data() + s.size())
        throw FormatError(where + ": cannot parse '" + std::string(s) +
                          "' as a number");
    return v;
}

std::uint64_t parse_uint(std::string_view s, const std::string& where) {
    std::uint64_t v = 0;
    auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (ec != std::errc{} || p != s.data() + s.size())
        throw FormatError(where + ": cannot parse '" + std::string(s) +
                          "' as an unsigned integer");
    return v;
}

std::vector<std::string_view> split_csv(std::string_view line) {
    std::vector<std::string_view> fields;
    std::size_t pos = 0;
    while (true) {
        std::size_t comma = line.find(',', pos);
        if (comma == std::string_view::npos) {
            fields.push_back(line.substr(pos));
            break;
        }
        fields.push_back(line.substr(pos, comma - pos));
        pos = comma + 1;
    }
    return fields;
}

std::string trace_filename(const RoiTrace& t) {
    return "trace_v" + std::to_string(t.video_id) + ".csv";
}

void write_trace_csv(const fs::path& path, const RoiTrace& t) {
    std::ofstream os(path, std::ios::trunc);
    if (!os) throw IoError("cannot open " + path.string() + " for writing");
    os << "frame,roi";
    for (std::size_t ch = 0; ch < t.channels; ++ch) os << ",ch" << ch;
    os << '\n';
    const std::size_t f = t.frame_count();
    for (std::size_t frame = 0; frame < f; ++frame)
        for (std::size_t roi = 0; roi < t.n_rois; ++roi) {
            os << frame << ',' << roi;
            for (std::size_t ch = 0; ch < t.channels; ++ch)
                os << ',' << format_double(t.at(frame, roi, ch));
            os << '\n';
        }
    os.flush();
    if (!os) throw IoError("write failed for " + path.string());
}

RoiTrace read_trace_csv(const fs::path& path, const RoiTrace& meta,
                        std::size_t expect_frames) {
    std::ifstream is(path);
    if (!is) throw IoError("cannot open trace file " + path.string());
    RoiTrace t = meta;
    t.frames.clear();
    t.frames.reserve(expect_frames * t.n_rois * t.channels);

    std::string line;
    std::size_t lineno = 1;
    if (!std::getline(is, line))
        throw FormatError(path.string() + ": empty trace file");
    std::string want_header = "frame,roi";
    for (std::size_t ch = 0; ch < t.channels; ++ch)
        want_header += ",ch" + std::to_string(ch);
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line != want_header)
        throw FormatError(path.string() + ": header '" + line +
                          "', expected '" + want_header + "'");

    std::size_t row = 0;
    while (std::getline(is, line)) {
        ++lineno;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        const std::string where = path.string() + ":" + std::to_string(lineno);
        auto fields = split_csv(line);
        if (fields.size() != 2 + t.channels)
            throw FormatError(where + ": expected " +
                              std::to_string(2 + t.channels) + " fields, got " +
                              std::to_string(fields.size()));
        std::uint64_t frame = parse_uint(fields[0], where);
        std::uint64_t roi = parse_uint(fields[1], where);
        if (frame != row / t.n_rois || roi != row % t.n_rois)
            throw FormatError(where + ": rows must be sorted by (frame, roi) " +
                              "with no gaps; expected frame " +
                              std::to_string(row / t.n_rois) + " roi " +
                              std::to_string(row % t.n_rois));
        for (std::size_t ch = 0; ch < t.channels; ++ch)
            t.frames.push_back(parse_double(fields[2 + ch], where));
        ++row;
    }
    if (row != expect_frames * t.n_rois)
        throw FormatError(path.string() + ": has " + std::to_string(row) +
                          " data rows, manifest promises " +
                          std::to_string(expect_frames * t.n_rois));
    t.validate();
    return t;
}

} // namespace

void write_trace_dir(const fs::path& dir, const std::vector<RoiTrace>& traces) {
    fs::create_directories(dir);
    ordered_json manifest = ordered_json::array();
    for (const RoiTrace& t : traces) {
        t.validate();
        const std::string fname = trace_filename(t);
        write_trace_csv(dir / fname, t);
        manifest.push_back({{"video_id", t.video_id},
                            {"source_id", t.source_id},
                            {"fps", t.fps},
                            {"n_rois", t.n_rois},
                            {"channels", t.channels},
                            {"frames", t.frame_count()},
                            {"trace_file", fname}});
    }
    std::ofstream os(dir / "manifest.json", std::ios::trunc);
    if (!os) throw IoError("cannot open " + (dir / "manifest.json").string());
    os << manifest.dump(2) << '\n';
    if (!os) throw IoError("write failed for " + (dir / "manifest.json").string());
}

std::vector<RoiTrace> read_trace_dir(const fs::path& dir) {
    const fs::path mpath = dir / "manifest.json";
    std::ifstream is(mpath);
    if (!is) throw IoError("cannot open trace manifest " + mpath.string());
    json manifest;
    try {
        is >> manifest;
    } catch (const json::exception& e) {
        throw FormatError(mpath.string() + ": " + e.what());
    }
    if (!manifest.is_array())
        throw FormatError(mpath.string() + ": top level must be an array");

    std::vector<RoiTrace> traces;
    for (const auto& entry : manifest) {
        try {
            RoiTrace meta;
            meta.video_id = entry.at("video_id").get<std::uint32_t>();
            meta.source_id = entry.at("source_id").get<std::uint32_t>();
            meta.fps = entry.at("fps").get<double>();
            meta.n_rois = entry.at("n_rois").get<std::size_t>();
            meta.channels = entry.at("channels").get<std::size_t>();
            auto frames = entry.at("frames").get<std::size_t>();
            auto file = entry.at("trace_file").get<std::string>();
            traces.push_back(read_trace_csv(dir / file, meta, frames));
        } catch (const json::exception& e) {
            throw FormatError(mpath.string() + ": " + e.what());
        }
    }
    return traces;
}

void write_map_dir(const fs::path& dir,
                   const std::vector<SpatioTemporalMap>& maps) {
    fs::create_directories(dir);
    for (const auto& m : maps) {
        std::string name = "v" + std::to_string(m.video_id) + "_c" +
                           std::to_string(m.clip_index) + ".stmp";
        write_map(m, dir / name);
    }
}

std::vector<SpatioTemporalMap> read_map_dir(const fs::path& dir) {
    if (!fs::is_directory(dir))
        throw IoError("map directory " + dir.string() + " does not exist");
    std::vector<SpatioTemporalMap> maps;
    for (const auto& e : fs::directory_iterator(dir)) {
        if (!e.is_regular_file() || e.path().extension() != ".stmp") continue;
        maps.push_back(read_map(e.path()));
    }
    std::sort(maps.begin(), maps.end(), [](const auto& a, const auto& b) {
        return a.video_id != b.video_id ? a.video_id < b.video_id
                                        : a.clip_index < b.clip_index;
    });
    return maps;
}

} // namespace rppg::stmap
