#pragma once

// File formats and persistence.
//
//  * KITTI label files: the devkit text layout, one object per line
//    (type, truncated, occluded, alpha, bbox l/t/r/b, 3D dims, 3D location,
//    rotation_y[, score]). Corner boxes become center boxes; either the
//    alpha or the rotation_y field is discretized into viewpoint bins.
//  * Detections / predictions: one record per line,
//      <image_id> <category> <cx> <cy> <w> <h> <score> bin:<i>|angle:<a>
//    with optional probs:<p0,...> (per-bin local scores) and
//    psi:<v0,...> (coupled response, written by inference).
//  * Model bundles: a directory of plain text tables plus a manifest.
//    All floating point is printed with %.17g, which round-trips doubles
//    exactly, so a loaded model reproduces density evaluations bit for bit.

#include <algorithm>
#include <array>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "relview/density.hpp"
#include "relview/errors.hpp"
#include "relview/eval.hpp"
#include "relview/fusion.hpp"
#include "relview/localclf.hpp"
#include "relview/relations.hpp"
#include "relview/scene.hpp"

#include "json.hpp"

namespace relview {

inline constexpr const char* kBundleVersion = "1";

namespace detail {

inline std::string fmt_g17(double v) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

inline std::vector<std::string> split_ws(const std::string& line) {
    std::vector<std::string> out;
    std::istringstream ss(line);
    std::string tok;
    while (ss >> tok) out.push_back(tok);
    return out;
}

inline double parse_double(const std::string& tok, const std::string& file, long line) {
    const char* begin = tok.c_str();
    char* end = nullptr;
    const double v = std::strtod(begin, &end);
    if (end == begin || *end != '\0')
        throw ParseError(file, line, "expected a number, got '" + tok + "'");
    return v;
}

inline long parse_long(const std::string& tok, const std::string& file, long line) {
    const char* begin = tok.c_str();
    char* end = nullptr;
    const long v = std::strtol(begin, &end, 10);
    if (end == begin || *end != '\0')
        throw ParseError(file, line, "expected an integer, got '" + tok + "'");
    return v;
}

inline std::vector<double> parse_double_list(const std::string& csv,
                                             const std::string& file, long line) {
    std::vector<double> out;
    std::string cur;
    std::istringstream ss(csv);
    while (std::getline(ss, cur, ',')) out.push_back(parse_double(cur, file, line));
    return out;
}

inline std::ifstream open_input(const std::filesystem::path& p) {
    std::ifstream in(p);
    if (!in) throw DataError("cannot open " + p.string());
    return in;
}

inline std::ofstream open_output(const std::filesystem::path& p) {
    std::ofstream out(p);
    if (!out) throw DataError("cannot write " + p.string());
    return out;
}

}  // namespace detail

// ---------------------------------------------------------------------------
// KITTI labels
// ---------------------------------------------------------------------------

enum class AngleField { Alpha, RotationY };

inline AngleField angle_field_from_name(const std::string& s) {
    if (s == "alpha") return AngleField::Alpha;
    if (s == "rot_y") return AngleField::RotationY;
    throw ConfigError("unknown angle field: " + s);
}

inline const char* angle_field_name(AngleField f) {
    return f == AngleField::Alpha ? "alpha" : "rot_y";
}

// One image's annotations. Lines must carry 15 fields (16 with a trailing
// score, which labels ignore); "DontCare" lines and categories outside the
// filter are skipped. Annotations get score 1 and the discretized bin of
// the configured angle field.
inline std::vector<ObjectHypothesis> parse_kitti_label_file(
    const std::filesystem::path& path, int k, AngleField angle_field,
    const std::vector<std::string>& category_filter = {}) {
    std::ifstream in = detail::open_input(path);
    std::vector<ObjectHypothesis> out;
    std::string line;
    long line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        const auto f = detail::split_ws(line);
        if (f.empty()) continue;
        if (f.size() != 15 && f.size() != 16)
            throw ParseError(path.string(), line_no,
                             "expected 15 or 16 fields, got " + std::to_string(f.size()));
        if (f[0] == "DontCare") continue;
        if (!category_filter.empty() &&
            std::find(category_filter.begin(), category_filter.end(), f[0]) ==
                category_filter.end())
            continue;
        const double alpha = detail::parse_double(f[3], path.string(), line_no);
        const double left = detail::parse_double(f[4], path.string(), line_no);
        const double top = detail::parse_double(f[5], path.string(), line_no);
        const double right = detail::parse_double(f[6], path.string(), line_no);
        const double bottom = detail::parse_double(f[7], path.string(), line_no);
        const double rot_y = detail::parse_double(f[14], path.string(), line_no);
        if (right <= left || bottom <= top)
            throw ParseError(path.string(), line_no, "non-positive box extent");
        ObjectHypothesis a;
        a.category = f[0];
        a.box = {(left + right) / 2.0, (top + bottom) / 2.0, right - left, bottom - top};
        a.score = 1.0;
        a.bin = discretize_viewpoint(
            angle_field == AngleField::Alpha ? alpha : rot_y, k);
        out.push_back(std::move(a));
    }
    return out;
}

// Loads a directory of <image_id>.txt label files into annotation-only
// scenes, sorted by image id.
inline std::vector<Scene> load_label_dir(const std::filesystem::path& dir, int k,
                                         AngleField angle_field,
                                         const std::vector<std::string>& category_filter = {}) {
    if (!std::filesystem::is_directory(dir))
        throw DataError("label directory not found: " + dir.string());
    std::vector<std::filesystem::path> files;
    for (const auto& e : std::filesystem::directory_iterator(dir))
        if (e.is_regular_file() && e.path().extension() == ".txt")
            files.push_back(e.path());
    std::sort(files.begin(), files.end());
    std::vector<Scene> scenes;
    for (const auto& p : files) {
        Scene s;
        s.image_id = p.stem().string();
        s.annotations = parse_kitti_label_file(p, k, angle_field, category_filter);
        scenes.push_back(std::move(s));
    }
    return scenes;
}

// ---------------------------------------------------------------------------
// Detections and predictions
// ---------------------------------------------------------------------------

// Serializes one hypothesis; write_psi appends the coupled response when
// one is attached via `psi`.
inline std::string format_detection_line(const std::string& image_id,
                                         const ObjectHypothesis& h,
                                         const std::vector<double>* psi = nullptr) {
    std::string s = image_id + " " + h.category + " " + detail::fmt_g17(h.box.cx) +
                    " " + detail::fmt_g17(h.box.cy) + " " + detail::fmt_g17(h.box.w) +
                    " " + detail::fmt_g17(h.box.h) + " " + detail::fmt_g17(h.score) +
                    " bin:" + std::to_string(h.bin);
    if (!h.local_scores.empty()) {
        s += " probs:";
        for (std::size_t i = 0; i < h.local_scores.size(); ++i) {
            if (i) s += ",";
            s += detail::fmt_g17(h.local_scores[i]);
        }
    }
    if (psi) {
        s += " psi:";
        for (std::size_t i = 0; i < psi->size(); ++i) {
            if (i) s += ",";
            s += detail::fmt_g17((*psi)[i]);
        }
    }
    return s;
}

struct ParsedDetections {
    // Scenes ordered by image id, annotations empty. Coupled responses, when
    // present in the file, are stored parallel to each scene's hypotheses
    // (empty vectors where a line carried none).
    std::vector<Scene> scenes;
    std::vector<std::vector<std::vector<double>>> psi;
};

inline ParsedDetections parse_detections(const std::filesystem::path& path, int k) {
    std::ifstream in = detail::open_input(path);
    std::map<std::string, std::size_t> index;
    ParsedDetections out;
    std::string line;
    long line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        const auto f = detail::split_ws(line);
        if (f.empty()) continue;
        if (f.size() < 8)
            throw ParseError(path.string(), line_no, "expected at least 8 fields");
        ObjectHypothesis h;
        h.category = f[1];
        h.box.cx = detail::parse_double(f[2], path.string(), line_no);
        h.box.cy = detail::parse_double(f[3], path.string(), line_no);
        h.box.w = detail::parse_double(f[4], path.string(), line_no);
        h.box.h = detail::parse_double(f[5], path.string(), line_no);
        h.score = detail::parse_double(f[6], path.string(), line_no);
        bool have_bin = false, have_angle = false;
        std::vector<double> psi;
        for (std::size_t t = 7; t < f.size(); ++t) {
            const std::string& tok = f[t];
            if (tok.rfind("bin:", 0) == 0) {
                if (have_angle)
                    throw ParseError(path.string(), line_no,
                                     "record carries both a bin and an angle");
                have_bin = true;
                const long b = detail::parse_long(tok.substr(4), path.string(), line_no);
                if (b < 0 || b >= k)
                    throw ParseError(path.string(), line_no, "bin out of range");
                h.bin = static_cast<int>(b);
            } else if (tok.rfind("angle:", 0) == 0) {
                if (have_bin)
                    throw ParseError(path.string(), line_no,
                                     "record carries both a bin and an angle");
                have_angle = true;
                h.bin = discretize_viewpoint(
                    detail::parse_double(tok.substr(6), path.string(), line_no), k);
            } else if (tok.rfind("probs:", 0) == 0) {
                h.local_scores =
                    detail::parse_double_list(tok.substr(6), path.string(), line_no);
                if (static_cast<int>(h.local_scores.size()) != k)
                    throw ParseError(path.string(), line_no,
                                     "probs length does not match the bin count");
            } else if (tok.rfind("psi:", 0) == 0) {
                psi = detail::parse_double_list(tok.substr(4), path.string(), line_no);
                if (static_cast<int>(psi.size()) != 2 * k)
                    throw ParseError(path.string(), line_no,
                                     "psi length does not match the bin count");
            } else {
                throw ParseError(path.string(), line_no, "unknown field '" + tok + "'");
            }
        }
        if (!have_bin && !have_angle)
            throw ParseError(path.string(), line_no,
                             "record carries neither a bin nor an angle");
        const std::string& image_id = f[0];
        auto it = index.find(image_id);
        if (it == index.end()) {
            it = index.emplace(image_id, out.scenes.size()).first;
            out.scenes.push_back(Scene{image_id, {}, {}});
            out.psi.emplace_back();
        }
        out.scenes[it->second].hypotheses.push_back(std::move(h));
        out.psi[it->second].push_back(std::move(psi));
    }
    // Deterministic order regardless of file order.
    std::vector<std::size_t> order(out.scenes.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
        return out.scenes[a].image_id < out.scenes[b].image_id;
    });
    ParsedDetections sorted;
    for (std::size_t i : order) {
        sorted.scenes.push_back(std::move(out.scenes[i]));
        sorted.psi.push_back(std::move(out.psi[i]));
    }
    return sorted;
}

inline void write_detections(const std::filesystem::path& path,
                             const std::vector<Scene>& scenes,
                             const std::vector<std::vector<std::vector<double>>>* psi = nullptr) {
    std::ofstream out = detail::open_output(path);
    for (std::size_t s = 0; s < scenes.size(); ++s) {
        for (std::size_t i = 0; i < scenes[s].hypotheses.size(); ++i) {
            const std::vector<double>* p = nullptr;
            if (psi && !(*psi)[s][i].empty()) p = &(*psi)[s][i];
            out << format_detection_line(scenes[s].image_id, scenes[s].hypotheses[i], p)
                << "\n";
        }
    }
    if (!out.good()) throw DataError("failed writing " + path.string());
}

// ---------------------------------------------------------------------------
// KITTI label writing (for the synthetic generator)
// ---------------------------------------------------------------------------

// Emits annotations in the same devkit layout the parser accepts. Unused 3D
// fields are zeroed; both angle fields carry the bin center so either
// configuration re-reads to the same bin.
inline void write_kitti_label_file(const std::filesystem::path& path,
                                   const std::vector<ObjectHypothesis>& annotations,
                                   int k) {
    std::ofstream out = detail::open_output(path);
    for (const auto& a : annotations) {
        const double angle = bin_center_angle(a.bin, k);
        out << a.category << " 0 0 " << detail::fmt_g17(angle) << " "
            << detail::fmt_g17(a.box.cx - a.box.w / 2.0) << " "
            << detail::fmt_g17(a.box.cy - a.box.h / 2.0) << " "
            << detail::fmt_g17(a.box.cx + a.box.w / 2.0) << " "
            << detail::fmt_g17(a.box.cy + a.box.h / 2.0) << " 0 0 0 0 0 0 "
            << detail::fmt_g17(angle) << "\n";
    }
    if (!out.good()) throw DataError("failed writing " + path.string());
}

// ---------------------------------------------------------------------------
// Chronological split
// ---------------------------------------------------------------------------

// Scenes are keyed "<sequence>_<frame>"; each sequence is sorted by frame
// and cut into three consecutive slices by the given fractions.
inline std::array<std::vector<Scene>, 3> split_chronological(
    std::vector<Scene> scenes,
    std::array<double, 3> fractions = {1.0 / 3.0, 1.0 / 3.0, 1.0 / 3.0}) {
    const double fsum = fractions[0] + fractions[1] + fractions[2];
    if (std::abs(fsum - 1.0) > 1e-9) throw ConfigError("split fractions must sum to 1");
    std::map<std::string, std::vector<Scene>> by_seq;
    for (auto& s : scenes) {
        const auto cut = s.image_id.find('_');
        by_seq[cut == std::string::npos ? s.image_id : s.image_id.substr(0, cut)]
            .push_back(std::move(s));
    }
    std::array<std::vector<Scene>, 3> out;
    for (auto& [seq, group] : by_seq) {
        std::sort(group.begin(), group.end(),
                  [](const Scene& a, const Scene& b) { return a.image_id < b.image_id; });
        const std::size_t n = group.size();
        const std::size_t n1 = static_cast<std::size_t>(fractions[0] * static_cast<double>(n));
        const std::size_t n2 = static_cast<std::size_t>(fractions[1] * static_cast<double>(n));
        for (std::size_t i = 0; i < n; ++i) {
            const int slot = i < n1 ? 0 : (i < n1 + n2 ? 1 : 2);
            out[static_cast<std::size_t>(slot)].push_back(std::move(group[i]));
        }
    }
    return out;
}

// ---------------------------------------------------------------------------
// Model bundle
// ---------------------------------------------------------------------------

struct ModelBundle {
    RelationalModel relational;
    ScoreModel score;
    std::optional<ProbFusionModel> prob_fusion;
    std::optional<LinearFusionModel> linear_fusion;
    double iou_threshold = 0.5;
    AngleField angle_field = AngleField::Alpha;
};

namespace detail {

inline void write_kde(const std::filesystem::path& path, const Kde& kde) {
    std::ofstream out = open_output(path);
    out << kde.dim() << " " << kde.samples.size() << "\n";
    for (int d = 0; d < kde.dim(); ++d)
        out << (d ? " " : "") << fmt_g17(kde.bandwidth[static_cast<std::size_t>(d)]);
    out << "\n";
    for (const auto& s : kde.samples) {
        for (std::size_t d = 0; d < s.size(); ++d) out << (d ? " " : "") << fmt_g17(s[d]);
        out << "\n";
    }
    if (!out.good()) throw DataError("failed writing " + path.string());
}

inline Kde read_kde(const std::filesystem::path& path) {
    std::ifstream in = open_input(path);
    const std::string file = path.string();
    std::string line;
    if (!std::getline(in, line)) throw ParseError(file, 1, "missing header");
    auto head = split_ws(line);
    if (head.size() != 2) throw ParseError(file, 1, "bad header");
    const long d = parse_long(head[0], file, 1);
    const long m = parse_long(head[1], file, 1);
    if (d <= 0 || m <= 0) throw ParseError(file, 1, "bad dimensions");
    if (!std::getline(in, line)) throw ParseError(file, 2, "missing bandwidth");
    auto hs = split_ws(line);
    if (static_cast<long>(hs.size()) != d) throw ParseError(file, 2, "bad bandwidth row");
    std::vector<double> bandwidth;
    for (const auto& t : hs) bandwidth.push_back(parse_double(t, file, 2));
    std::vector<std::vector<double>> samples;
    for (long i = 0; i < m; ++i) {
        if (!std::getline(in, line)) throw ParseError(file, 3 + i, "missing sample row");
        auto ts = split_ws(line);
        if (static_cast<long>(ts.size()) != d)
            throw ParseError(file, 3 + i, "bad sample row");
        std::vector<double> row;
        for (const auto& t : ts) row.push_back(parse_double(t, file, 3 + i));
        samples.push_back(std::move(row));
    }
    return kde_fit_with_bandwidth(std::move(samples), std::move(bandwidth));
}

inline void write_box(const std::filesystem::path& path, const FeatureBox& box) {
    std::ofstream out = open_output(path);
    out << box.lo.size() << "\n";
    for (std::size_t d = 0; d < box.lo.size(); ++d)
        out << (d ? " " : "") << fmt_g17(box.lo[d]);
    out << "\n";
    for (std::size_t d = 0; d < box.hi.size(); ++d)
        out << (d ? " " : "") << fmt_g17(box.hi[d]);
    out << "\n";
    if (!out.good()) throw DataError("failed writing " + path.string());
}

inline FeatureBox read_box(const std::filesystem::path& path) {
    std::ifstream in = open_input(path);
    const std::string file = path.string();
    std::string line;
    if (!std::getline(in, line)) throw ParseError(file, 1, "missing header");
    const long d = parse_long(split_ws(line).at(0), file, 1);
    FeatureBox box;
    if (!std::getline(in, line)) throw ParseError(file, 2, "missing lower bounds");
    for (const auto& t : split_ws(line)) box.lo.push_back(parse_double(t, file, 2));
    if (!std::getline(in, line)) throw ParseError(file, 3, "missing upper bounds");
    for (const auto& t : split_ws(line)) box.hi.push_back(parse_double(t, file, 3));
    if (static_cast<long>(box.lo.size()) != d || static_cast<long>(box.hi.size()) != d)
        throw ParseError(file, 2, "bound rows do not match the dimension");
    return box;
}

// A density cell round-trips as: fitted -> a .kde file; uniform -> derived
// at load time from the pair's feature box; absent -> nothing.
inline void write_density(const std::filesystem::path& path, const Density& d) {
    if (d.kind == Density::Kind::Fitted) write_kde(path, d.kde);
}

inline Density read_density(const std::filesystem::path& path, const FeatureBox& box) {
    if (std::filesystem::exists(path)) return density_from_kde(read_kde(path));
    if (box.valid()) return density_uniform(box.log_uniform_const());
    return Density{};
}

inline void write_priors(const std::filesystem::path& path,
                         const std::vector<std::string>& categories,
                         const std::map<std::string, StatePriors>& priors) {
    std::ofstream out = open_output(path);
    for (std::size_t i = 0; i < categories.size(); ++i) {
        const StatePriors& p = priors.at(categories[i]);
        out << i << " " << fmt_g17(p.p_pp) << " " << fmt_g17(p.p_mp) << " "
            << fmt_g17(p.p_mm) << "\n";
    }
    if (!out.good()) throw DataError("failed writing " + path.string());
}

inline std::map<std::string, StatePriors> read_priors(
    const std::filesystem::path& path, const std::vector<std::string>& categories) {
    std::ifstream in = open_input(path);
    const std::string file = path.string();
    std::map<std::string, StatePriors> out;
    std::string line;
    long line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        const auto f = split_ws(line);
        if (f.empty()) continue;
        if (f.size() != 4) throw ParseError(file, line_no, "expected 4 fields");
        const long idx = parse_long(f[0], file, line_no);
        if (idx < 0 || idx >= static_cast<long>(categories.size()))
            throw ParseError(file, line_no, "category index out of range");
        StatePriors p;
        p.p_pp = parse_double(f[1], file, line_no);
        p.p_mp = parse_double(f[2], file, line_no);
        p.p_mm = parse_double(f[3], file, line_no);
        out[categories[static_cast<std::size_t>(idx)]] = p;
    }
    if (out.size() != categories.size())
        throw DataError("priors file is missing categories: " + file);
    return out;
}

inline std::string join_csv(const std::vector<std::string>& v) {
    std::string s;
    for (std::size_t i = 0; i < v.size(); ++i) {
        if (i) s += ",";
        s += v[i];
    }
    return s;
}

inline std::vector<std::string> split_csv(const std::string& s) {
    std::vector<std::string> out;
    std::string cur;
    std::istringstream ss(s);
    while (std::getline(ss, cur, ',')) out.push_back(cur);
    return out;
}

}  // namespace detail

inline void save_model(const std::filesystem::path& bundle_dir, const ModelBundle& bundle) {
    namespace fs = std::filesystem;
    const fs::path tmp = bundle_dir.string() + ".tmp";
    fs::remove_all(tmp);
    fs::create_directories(tmp);

    const RelationalModel& rm = bundle.relational;
    {
        std::ofstream m = detail::open_output(tmp / "manifest.txt");
        m << "angle_field " << angle_field_name(bundle.angle_field) << "\n";
        m << "avp_duplicate_policy fp-claims-annotation\n";
        m << "bandwidth_rule scott\n";
        m << "categories " << detail::join_csv(rm.categories) << "\n";
        m << "format " << relation_format_name(rm.format) << "\n";
        m << "iou_threshold " << detail::fmt_g17(bundle.iou_threshold) << "\n";
        m << "k " << rm.k << "\n";
        m << "min_samples " << rm.min_samples << "\n";
        m << "relation_pooling ordered-pairs-after-substitution\n";
        m << "version " << kBundleVersion << "\n";
        if (!m.good()) throw DataError("failed writing the bundle manifest");
    }

    const fs::path rel = tmp / "relational";
    fs::create_directories(rel);
    detail::write_priors(rel / "priors.txt", rm.categories, rm.priors);
    for (std::size_t i = 0; i < rm.categories.size(); ++i) {
        for (std::size_t j = 0; j < rm.categories.size(); ++j) {
            const auto& cell = rm.pairs.at({rm.categories[i], rm.categories[j]});
            const fs::path pdir =
                rel / ("pair_" + std::to_string(i) + "_" + std::to_string(j));
            fs::create_directories(pdir);
            if (cell.box.valid()) detail::write_box(pdir / "box.txt", cell.box);
            detail::write_density(pdir / "pp.kde", cell.pp);
            detail::write_density(pdir / "mp.kde", cell.mp);
            detail::write_density(pdir / "mm.kde", cell.mm);
            for (std::size_t b = 0; b < cell.pp_by_bin.size(); ++b)
                detail::write_density(pdir / ("pp_bin" + std::to_string(b) + ".kde"),
                                      cell.pp_by_bin[b]);
            if (!cell.pp_by_bin.empty()) {
                std::ofstream flag = detail::open_output(pdir / "per_bin.txt");
                flag << cell.pp_by_bin.size() << "\n";
            }
        }
    }

    const fs::path sc = tmp / "score";
    fs::create_directories(sc);
    std::vector<std::string> score_cats;
    for (const auto& [cat, cell] : bundle.score.categories) score_cats.push_back(cat);
    {
        std::ofstream cats = detail::open_output(sc / "categories.txt");
        for (const auto& c : score_cats) cats << c << "\n";
    }
    detail::write_priors(sc / "priors.txt", score_cats, bundle.score.priors);
    for (std::size_t i = 0; i < score_cats.size(); ++i) {
        const auto& cell = bundle.score.categories.at(score_cats[i]);
        const fs::path cdir = sc / ("cat_" + std::to_string(i));
        fs::create_directories(cdir);
        if (cell.box.valid()) detail::write_box(cdir / "box.txt", cell.box);
        detail::write_density(cdir / "pp.kde", cell.by_state[0]);
        detail::write_density(cdir / "mp.kde", cell.by_state[1]);
        detail::write_density(cdir / "mm.kde", cell.by_state[2]);
    }

    if (bundle.prob_fusion) {
        const fs::path fp = tmp / "fusion_prob";
        fs::create_directories(fp);
        const ProbFusionModel& pf = *bundle.prob_fusion;
        std::ofstream pr = detail::open_output(fp / "priors.txt");
        for (double p : pf.priors) pr << detail::fmt_g17(p) << "\n";
        // Per-class cells are either fitted (a .kde file) or a uniform
        // fallback whose constant is stored verbatim here.
        std::ofstream consts = detail::open_output(fp / "uniform.txt");
        for (const auto& d : pf.per_class)
            consts << (d.kind == Density::Kind::Uniform ? detail::fmt_g17(d.log_const)
                                                        : std::string("fitted"))
                   << "\n";
        for (std::size_t c = 0; c < pf.per_class.size(); ++c)
            detail::write_density(fp / ("class_" + std::to_string(c) + ".kde"),
                                  pf.per_class[c]);
    }

    if (bundle.linear_fusion) {
        const fs::path fl = tmp / "fusion_linear";
        fs::create_directories(fl);
        const LinearFusionModel& lf = *bundle.linear_fusion;
        std::ofstream w = detail::open_output(fl / "weights.txt");
        w << lf.k << " " << (lf.w.empty() ? 0 : lf.w.front().size()) << " "
          << detail::fmt_g17(lf.c) << "\n";
        for (const auto& row : lf.w) {
            for (std::size_t d = 0; d < row.size(); ++d)
                w << (d ? " " : "") << detail::fmt_g17(row[d]);
            w << "\n";
        }
        for (std::size_t c = 0; c < lf.bias.size(); ++c)
            w << (c ? " " : "") << detail::fmt_g17(lf.bias[c]);
        w << "\n";
        if (!w.good()) throw DataError("failed writing linear fusion weights");
    }

    fs::remove_all(bundle_dir);
    fs::rename(tmp, bundle_dir);
}

inline ModelBundle load_model(const std::filesystem::path& bundle_dir) {
    namespace fs = std::filesystem;
    if (!fs::is_directory(bundle_dir))
        throw DataError("model bundle not found: " + bundle_dir.string());

    std::map<std::string, std::string> manifest;
    {
        std::ifstream m = detail::open_input(bundle_dir / "manifest.txt");
        std::string line;
        while (std::getline(m, line)) {
            const auto cut = line.find(' ');
            if (cut == std::string::npos) continue;
            manifest[line.substr(0, cut)] = line.substr(cut + 1);
        }
    }
    const auto need = [&](const std::string& key) -> const std::string& {
        const auto it = manifest.find(key);
        if (it == manifest.end())
            throw DataError("bundle manifest is missing key '" + key + "'");
        return it->second;
    };
    if (need("version") != kBundleVersion)
        throw DataError("unsupported bundle version " + need("version"));

    ModelBundle bundle;
    RelationalModel& rm = bundle.relational;
    rm.format = relation_format_from_name(need("format"));
    rm.k = static_cast<int>(detail::parse_long(need("k"), "manifest.txt", 0));
    if (rm.k < 2) throw DataError("bundle declares an invalid bin count");
    rm.min_samples =
        static_cast<int>(detail::parse_long(need("min_samples"), "manifest.txt", 0));
    rm.categories = detail::split_csv(need("categories"));
    bundle.iou_threshold = detail::parse_double(need("iou_threshold"), "manifest.txt", 0);
    bundle.angle_field = angle_field_from_name(need("angle_field"));

    const fs::path rel = bundle_dir / "relational";
    rm.priors = detail::read_priors(rel / "priors.txt", rm.categories);
    for (std::size_t i = 0; i < rm.categories.size(); ++i) {
        for (std::size_t j = 0; j < rm.categories.size(); ++j) {
            const fs::path pdir =
                rel / ("pair_" + std::to_string(i) + "_" + std::to_string(j));
            if (!fs::is_directory(pdir))
                throw DataError("bundle is missing " + pdir.string());
            PairDensities cell;
            if (fs::exists(pdir / "box.txt")) cell.box = detail::read_box(pdir / "box.txt");
            cell.pp = detail::read_density(pdir / "pp.kde", cell.box);
            cell.mp = detail::read_density(pdir / "mp.kde", cell.box);
            cell.mm = detail::read_density(pdir / "mm.kde", cell.box);
            if (fs::exists(pdir / "per_bin.txt")) {
                cell.pp_by_bin.resize(static_cast<std::size_t>(rm.k));
                for (int b = 0; b < rm.k; ++b)
                    cell.pp_by_bin[static_cast<std::size_t>(b)] = detail::read_density(
                        pdir / ("pp_bin" + std::to_string(b) + ".kde"), cell.box);
            }
            rm.pairs[{rm.categories[i], rm.categories[j]}] = std::move(cell);
        }
    }

    const fs::path sc = bundle_dir / "score";
    std::vector<std::string> score_cats;
    {
        std::ifstream cats = detail::open_input(sc / "categories.txt");
        std::string line;
        while (std::getline(cats, line))
            if (!line.empty()) score_cats.push_back(line);
    }
    bundle.score.priors = detail::read_priors(sc / "priors.txt", score_cats);
    for (std::size_t i = 0; i < score_cats.size(); ++i) {
        const fs::path cdir = sc / ("cat_" + std::to_string(i));
        CategoryScoreDensities cell;
        if (fs::exists(cdir / "box.txt")) cell.box = detail::read_box(cdir / "box.txt");
        cell.by_state[0] = detail::read_density(cdir / "pp.kde", cell.box);
        cell.by_state[1] = detail::read_density(cdir / "mp.kde", cell.box);
        cell.by_state[2] = detail::read_density(cdir / "mm.kde", cell.box);
        bundle.score.categories[score_cats[i]] = std::move(cell);
    }

    if (fs::is_directory(bundle_dir / "fusion_prob")) {
        const fs::path fp = bundle_dir / "fusion_prob";
        ProbFusionModel pf;
        pf.k = rm.k;
        {
            std::ifstream pr = detail::open_input(fp / "priors.txt");
            std::string line;
            long line_no = 0;
            while (std::getline(pr, line)) {
                ++line_no;
                if (!line.empty())
                    pf.priors.push_back(
                        detail::parse_double(line, (fp / "priors.txt").string(), line_no));
            }
        }
        if (static_cast<int>(pf.priors.size()) != rm.k)
            throw DataError("fusion priors do not match the bin count");
        std::vector<std::string> consts;
        {
            std::ifstream cf = detail::open_input(fp / "uniform.txt");
            std::string line;
            while (std::getline(cf, line)) consts.push_back(line);
        }
        if (static_cast<int>(consts.size()) != rm.k)
            throw DataError("fusion cell table does not match the bin count");
        pf.per_class.resize(static_cast<std::size_t>(rm.k));
        for (int c = 0; c < rm.k; ++c) {
            const fs::path kde_path = fp / ("class_" + std::to_string(c) + ".kde");
            if (consts[static_cast<std::size_t>(c)] == "fitted") {
                pf.per_class[static_cast<std::size_t>(c)] =
                    density_from_kde(detail::read_kde(kde_path));
            } else {
                pf.per_class[static_cast<std::size_t>(c)] =
                    density_uniform(detail::parse_double(
                        consts[static_cast<std::size_t>(c)], (fp / "uniform.txt").string(),
                        c + 1));
            }
        }
        bundle.prob_fusion = std::move(pf);
    }

    if (fs::is_directory(bundle_dir / "fusion_linear")) {
        const fs::path file = bundle_dir / "fusion_linear" / "weights.txt";
        std::ifstream w = detail::open_input(file);
        std::string line;
        if (!std::getline(w, line)) throw ParseError(file.string(), 1, "missing header");
        const auto head = detail::split_ws(line);
        if (head.size() != 3) throw ParseError(file.string(), 1, "bad header");
        LinearFusionModel lf;
        lf.k = static_cast<int>(detail::parse_long(head[0], file.string(), 1));
        const long dim = detail::parse_long(head[1], file.string(), 1);
        lf.c = detail::parse_double(head[2], file.string(), 1);
        for (int c = 0; c < lf.k; ++c) {
            if (!std::getline(w, line))
                throw ParseError(file.string(), 2 + c, "missing weight row");
            std::vector<double> row;
            for (const auto& t : detail::split_ws(line))
                row.push_back(detail::parse_double(t, file.string(), 2 + c));
            if (static_cast<long>(row.size()) != dim)
                throw ParseError(file.string(), 2 + c, "bad weight row");
            lf.w.push_back(std::move(row));
        }
        if (!std::getline(w, line))
            throw ParseError(file.string(), 2 + lf.k, "missing bias row");
        for (const auto& t : detail::split_ws(line))
            lf.bias.push_back(detail::parse_double(t, file.string(), 2 + lf.k));
        if (static_cast<int>(lf.bias.size()) != lf.k)
            throw ParseError(file.string(), 2 + lf.k, "bad bias row");
        bundle.linear_fusion = std::move(lf);
    }

    return bundle;
}

// ---------------------------------------------------------------------------
// Report serialization
// ---------------------------------------------------------------------------

namespace detail {

inline nlohmann::json sub_report_json(const SubReport& r) {
    nlohmann::json j;
    j["scenes"] = r.n_scenes;
    j["annotations"] = r.n_annotations;
    j["hypotheses"] = r.n_hypotheses;
    j["ap"] = r.ap;
    j["avp"] = r.avp;
    if (r.mppe_valid) j["mppe"] = r.mppe;
    j["taxonomy"] = {{"correct", r.taxonomy.correct},
                     {"nearby", r.taxonomy.nearby},
                     {"opposite", r.taxonomy.opposite},
                     {"other", r.taxonomy.other}};
    return j;
}

}  // namespace detail

// Machine-readable report. nlohmann::json keeps object keys sorted, so the
// emitted bytes are a pure function of the report contents.
inline void write_report(const std::filesystem::path& path, const EvalReport& report,
                         double iou_threshold) {
    nlohmann::json j;
    j["version"] = kBundleVersion;
    j["k"] = report.k;
    j["iou_threshold"] = iou_threshold;
    j["avp_duplicate_policy"] = "fp-claims-annotation";
    j["split_threshold"] = report.split_threshold;
    j["overall"] = detail::sub_report_json(report.overall);
    if (report.has_low) j["low"] = detail::sub_report_json(report.low);
    if (report.has_high) j["high"] = detail::sub_report_json(report.high);
    std::ofstream out = detail::open_output(path);
    out << j.dump(2) << "\n";
    if (!out.good()) throw DataError("failed writing " + path.string());
}

}  // namespace relview
