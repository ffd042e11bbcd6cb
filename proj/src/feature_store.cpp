#include "nbrselect/feature_store.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <limits>
#include <set>
#include <sstream>

#include <json.hpp>

#include "nbrselect/errors.hpp"
#include "nbrselect/util.hpp"

namespace nbrselect {

namespace {

// ----------------------------------------------------------------------------
// Little-endian primitives
// ----------------------------------------------------------------------------

std::uint32_t decode_u32_le(const unsigned char* p) {
    return std::uint32_t(p[0]) | (std::uint32_t(p[1]) << 8) | (std::uint32_t(p[2]) << 16) |
           (std::uint32_t(p[3]) << 24);
}

void encode_u32_le(std::uint32_t v, unsigned char* p) {
    p[0] = (unsigned char)(v & 0xff);
    p[1] = (unsigned char)((v >> 8) & 0xff);
    p[2] = (unsigned char)((v >> 16) & 0xff);
    p[3] = (unsigned char)((v >> 24) & 0xff);
}

float decode_f32_le(const unsigned char* p) {
    return std::bit_cast<float>(decode_u32_le(p));
}

void encode_f32_le(float v, unsigned char* p) {
    encode_u32_le(std::bit_cast<std::uint32_t>(v), p);
}

std::vector<unsigned char> read_file_bytes(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open '" + path.string() + "' for reading");
    in.seekg(0, std::ios::end);
    const auto size = in.tellg();
    if (size < 0) throw IoError("cannot size '" + path.string() + "'");
    in.seekg(0, std::ios::beg);
    std::vector<unsigned char> bytes(static_cast<std::size_t>(size));
    if (size > 0) in.read(reinterpret_cast<char*>(bytes.data()), size);
    if (!in) throw IoError("cannot read '" + path.string() + "'");
    return bytes;
}

void write_file_bytes(const std::filesystem::path& path,
                      const std::vector<unsigned char>& bytes) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot open '" + path.string() + "' for writing");
    out.write(reinterpret_cast<const char*>(bytes.data()),
              std::streamsize(bytes.size()));
    out.flush();
    if (!out) throw IoError("failed writing '" + path.string() + "'");
}

// Cursor over a byte buffer with bounds-checked reads.
struct ByteReader {
    const std::vector<unsigned char>& bytes;
    std::size_t pos = 0;
    const std::string& context;

    void need(std::size_t n, const char* what) const {
        if (pos + n > bytes.size())
            throw FormatError(context + ": truncated while reading " + what);
    }
    std::uint32_t u32(const char* what) {
        need(4, what);
        const auto v = decode_u32_le(bytes.data() + pos);
        pos += 4;
        return v;
    }
    float f32(const char* what) {
        need(4, what);
        const auto v = decode_f32_le(bytes.data() + pos);
        pos += 4;
        return v;
    }
    void magic(const char* expect) {
        need(4, "magic");
        if (std::memcmp(bytes.data() + pos, expect, 4) != 0)
            throw FormatError(context + ": bad magic, expected '" + expect + "'");
        pos += 4;
    }
    void done() const {
        if (pos != bytes.size())
            throw FormatError(context + ": " + std::to_string(bytes.size() - pos) +
                              " trailing bytes");
    }
};

struct ByteWriter {
    std::vector<unsigned char> bytes;

    void u32(std::uint32_t v) {
        unsigned char buf[4];
        encode_u32_le(v, buf);
        bytes.insert(bytes.end(), buf, buf + 4);
    }
    void f32(float v) {
        unsigned char buf[4];
        encode_f32_le(v, buf);
        bytes.insert(bytes.end(), buf, buf + 4);
    }
    void magic(const char* m) { bytes.insert(bytes.end(), m, m + 4); }
};

std::uint32_t checked_u32(std::size_t v, const char* what) {
    if (v > std::numeric_limits<std::uint32_t>::max())
        throw ValidationError(std::string(what) + " too large for the dump format");
    return std::uint32_t(v);
}

void check_matrix_shape(std::size_t n_samples, std::size_t n_classes,
                        const std::string& context) {
    if (n_samples == 0) throw ValidationError(context + ": no samples");
    if (n_classes < 2) throw ValidationError(context + ": need at least 2 classes");
    // Guard the multiplication before any allocation.
    if (n_classes != 0 &&
        n_samples > std::numeric_limits<std::size_t>::max() / n_classes / sizeof(double))
        throw ValidationError(context + ": matrix dimensions overflow");
}

// Validates one probability row; returns its sum.
double check_prob_row(std::span<const double> row, std::size_t row_index,
                      const std::string& context) {
    double sum = 0.0;
    for (std::size_t c = 0; c < row.size(); ++c) {
        const double v = row[c];
        if (!std::isfinite(v))
            throw ValidationError(context + ": non-finite value at row " +
                                  std::to_string(row_index) + " class " + std::to_string(c));
        if (v < 0.0 || v > 1.0)
            throw ValidationError(context + ": value " + to_shortest_string(v) +
                                  " outside [0, 1] at row " + std::to_string(row_index) +
                                  " class " + std::to_string(c));
        sum += v;
    }
    return sum;
}

void check_prob_rows(const std::vector<double>& values, std::size_t n_samples,
                     std::size_t n_classes, double tolerance, const std::string& context) {
    double worst_dev = 0.0;
    double worst_sum = 1.0;
    std::size_t worst_row = 0;
    for (std::size_t i = 0; i < n_samples; ++i) {
        const double sum =
            check_prob_row({values.data() + i * n_classes, n_classes}, i, context);
        const double dev = std::abs(sum - 1.0);
        if (dev > worst_dev) {
            worst_dev = dev;
            worst_sum = sum;
            worst_row = i;
        }
    }
    if (worst_dev > tolerance)
        throw ValidationError(context + ": row " + std::to_string(worst_row) + " sums to " +
                              to_shortest_string(worst_sum) + ", off by " +
                              to_shortest_string(worst_dev) + " (tolerance " +
                              to_shortest_string(tolerance) + ")");
}

std::string path_context(const std::filesystem::path& path, const char* kind) {
    return std::string(kind) + " '" + path.string() + "'";
}

// ----------------------------------------------------------------------------
// CSV
// ----------------------------------------------------------------------------

std::vector<std::string> split_csv_line(const std::string& line) {
    std::vector<std::string> out;
    std::string cur;
    for (char ch : line) {
        if (ch == ',') {
            out.push_back(cur);
            cur.clear();
        } else if (ch != '\r') {
            cur += ch;
        }
    }
    out.push_back(cur);
    return out;
}

// Parses "c0,c1,...,c{k-1}" headers; returns k.
std::size_t parse_csv_header(const std::string& line, const std::string& context) {
    const auto cells = split_csv_line(line);
    for (std::size_t i = 0; i < cells.size(); ++i) {
        const std::string expect = "c" + std::to_string(i);
        if (cells[i] != expect)
            throw FormatError(context + ": header column " + std::to_string(i) + " is '" +
                              cells[i] + "', expected '" + expect + "'");
    }
    return cells.size();
}

// Shared CSV body reader for probability and logit tables. Values are rounded
// through float32 so the CSV and binary forms of the same table agree.
void load_csv_table(const std::filesystem::path& path, const std::string& context,
                    std::size_t& n_samples, std::size_t& n_classes,
                    std::vector<double>& values) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open '" + path.string() + "' for reading");
    std::string line;
    if (!std::getline(in, line)) throw FormatError(context + ": empty file");
    n_classes = parse_csv_header(line, context);
    if (n_classes < 2) throw ValidationError(context + ": need at least 2 classes");
    values.clear();
    std::size_t row = 0;
    while (std::getline(in, line)) {
        if (line.empty() || line == "\r") continue;
        const auto cells = split_csv_line(line);
        if (cells.size() != n_classes)
            throw FormatError(context + ": row " + std::to_string(row) + " has " +
                              std::to_string(cells.size()) + " cells, expected " +
                              std::to_string(n_classes));
        for (const auto& cell : cells) {
            try {
                std::size_t consumed = 0;
                const double v = std::stod(cell, &consumed);
                if (consumed != cell.size()) throw std::invalid_argument(cell);
                values.push_back(double(float(v)));
            } catch (const std::exception&) {
                throw FormatError(context + ": cannot parse '" + cell + "' in row " +
                                  std::to_string(row));
            }
        }
        ++row;
    }
    n_samples = row;
    if (n_samples == 0) throw ValidationError(context + ": no samples");
}

bool looks_binary(const std::filesystem::path& path, const char* magic) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open '" + path.string() + "' for reading");
    char head[4] = {0, 0, 0, 0};
    in.read(head, 4);
    return in.gcount() == 4 && std::memcmp(head, magic, 4) == 0;
}

} // namespace

// ----------------------------------------------------------------------------
// Validation entry points
// ----------------------------------------------------------------------------

void validate_prob_matrix(const ProbMatrix& m, double row_tolerance,
                          const std::string& context) {
    const std::string ctx = context.empty() ? "probability matrix" : context;
    check_matrix_shape(m.n_samples, m.n_classes, ctx);
    if (m.values.size() != m.n_samples * m.n_classes)
        throw ValidationError(ctx + ": value count does not match shape");
    check_prob_rows(m.values, m.n_samples, m.n_classes, row_tolerance, ctx);
}

void validate_logit_matrix(const LogitMatrix& m, const std::string& context) {
    const std::string ctx = context.empty() ? "logit matrix" : context;
    check_matrix_shape(m.n_samples, m.n_classes, ctx);
    if (m.values.size() != m.n_samples * m.n_classes)
        throw ValidationError(ctx + ": value count does not match shape");
    for (std::size_t i = 0; i < m.values.size(); ++i)
        if (!std::isfinite(m.values[i]))
            throw ValidationError(ctx + ": non-finite value at row " +
                                  std::to_string(i / m.n_classes) + " class " +
                                  std::to_string(i % m.n_classes));
}

// ----------------------------------------------------------------------------
// Probability dumps
// ----------------------------------------------------------------------------

ProbMatrix load_prob_matrix(const std::filesystem::path& path) {
    if (!looks_binary(path, "PRB1")) return load_prob_matrix_csv(path);
    const std::string ctx = path_context(path, "prob dump");
    const auto bytes = read_file_bytes(path);
    ByteReader r{bytes, 0, ctx};
    r.magic("PRB1");
    ProbMatrix m;
    m.n_samples = r.u32("n_samples");
    m.n_classes = r.u32("n_classes");
    check_matrix_shape(m.n_samples, m.n_classes, ctx);
    const std::size_t count = m.n_samples * m.n_classes;
    m.values.resize(count);
    for (std::size_t i = 0; i < count; ++i) m.values[i] = double(r.f32("payload"));
    r.done();
    check_prob_rows(m.values, m.n_samples, m.n_classes, kProbRowTolerance, ctx);
    return m;
}

ProbMatrix load_prob_matrix_csv(const std::filesystem::path& path) {
    const std::string ctx = path_context(path, "prob csv");
    ProbMatrix m;
    load_csv_table(path, ctx, m.n_samples, m.n_classes, m.values);
    check_prob_rows(m.values, m.n_samples, m.n_classes, kProbRowTolerance, ctx);
    return m;
}

void save_prob_matrix(const std::filesystem::path& path, const ProbMatrix& m) {
    validate_prob_matrix(m, kProbRowTolerance, path_context(path, "prob dump"));
    ByteWriter w;
    w.magic("PRB1");
    w.u32(checked_u32(m.n_samples, "n_samples"));
    w.u32(checked_u32(m.n_classes, "n_classes"));
    for (double v : m.values) w.f32(float(v));
    write_file_bytes(path, w.bytes);
}

// ----------------------------------------------------------------------------
// Logit dumps
// ----------------------------------------------------------------------------

LogitMatrix load_logit_matrix(const std::filesystem::path& path) {
    if (!looks_binary(path, "LGT1")) return load_logit_matrix_csv(path);
    const std::string ctx = path_context(path, "logit dump");
    const auto bytes = read_file_bytes(path);
    ByteReader r{bytes, 0, ctx};
    r.magic("LGT1");
    LogitMatrix m;
    m.n_samples = r.u32("n_samples");
    m.n_classes = r.u32("n_classes");
    check_matrix_shape(m.n_samples, m.n_classes, ctx);
    const std::size_t count = m.n_samples * m.n_classes;
    m.values.resize(count);
    for (std::size_t i = 0; i < count; ++i) m.values[i] = double(r.f32("payload"));
    r.done();
    validate_logit_matrix(m, ctx);
    return m;
}

LogitMatrix load_logit_matrix_csv(const std::filesystem::path& path) {
    const std::string ctx = path_context(path, "logit csv");
    LogitMatrix m;
    load_csv_table(path, ctx, m.n_samples, m.n_classes, m.values);
    validate_logit_matrix(m, ctx);
    return m;
}

void save_logit_matrix(const std::filesystem::path& path, const LogitMatrix& m) {
    validate_logit_matrix(m, path_context(path, "logit dump"));
    ByteWriter w;
    w.magic("LGT1");
    w.u32(checked_u32(m.n_samples, "n_samples"));
    w.u32(checked_u32(m.n_classes, "n_classes"));
    for (double v : m.values) w.f32(float(v));
    write_file_bytes(path, w.bytes);
}

// ----------------------------------------------------------------------------
// Labels
// ----------------------------------------------------------------------------

LabelVector load_labels(const std::filesystem::path& path) {
    const std::string ctx = path_context(path, "label dump");
    const auto bytes = read_file_bytes(path);
    ByteReader r{bytes, 0, ctx};
    r.magic("LBL1");
    const std::uint32_t n = r.u32("count");
    if (n == 0) throw ValidationError(ctx + ": no labels");
    LabelVector v;
    v.labels.resize(n);
    for (std::uint32_t i = 0; i < n; ++i) v.labels[i] = r.u32("label");
    r.done();
    return v;
}

void save_labels(const std::filesystem::path& path, const LabelVector& v) {
    if (v.labels.empty())
        throw ValidationError(path_context(path, "label dump") + ": no labels");
    ByteWriter w;
    w.magic("LBL1");
    w.u32(checked_u32(v.labels.size(), "label count"));
    for (auto l : v.labels) w.u32(l);
    write_file_bytes(path, w.bytes);
}

// ----------------------------------------------------------------------------
// Segmentation dumps
// ----------------------------------------------------------------------------

SegmentationDump load_segmentation(const std::filesystem::path& path) {
    const std::string ctx = path_context(path, "segmentation dump");
    const auto bytes = read_file_bytes(path);
    ByteReader r{bytes, 0, ctx};
    r.magic("SEG1");
    const std::uint32_t n_images = r.u32("n_images");
    if (n_images == 0) throw ValidationError(ctx + ": no images");
    SegmentationDump dump;
    dump.images.resize(n_images);
    for (std::uint32_t k = 0; k < n_images; ++k) {
        auto& img = dump.images[k];
        img.height = r.u32("height");
        img.width = r.u32("width");
        img.n_classes = r.u32("n_classes");
        const std::string img_ctx = ctx + " image " + std::to_string(k);
        if (img.height == 0 || img.width == 0)
            throw ValidationError(img_ctx + ": empty image");
        if (img.n_classes < 2)
            throw ValidationError(img_ctx + ": need at least 2 classes");
        if (k > 0 && img.n_classes != dump.images[0].n_classes)
            throw ValidationError(img_ctx + ": class count " +
                                  std::to_string(img.n_classes) +
                                  " differs from image 0 (" +
                                  std::to_string(dump.images[0].n_classes) + ")");
        const std::size_t count = img.n_pixels() * img.n_classes;
        img.probs.resize(count);
        for (std::size_t i = 0; i < count; ++i) img.probs[i] = double(r.f32("payload"));
        check_prob_rows(img.probs, img.n_pixels(), img.n_classes,
                        kSegmentationRowTolerance, img_ctx);
    }
    r.done();
    return dump;
}

void save_segmentation(const std::filesystem::path& path, const SegmentationDump& d) {
    const std::string ctx = path_context(path, "segmentation dump");
    if (d.images.empty()) throw ValidationError(ctx + ": no images");
    ByteWriter w;
    w.magic("SEG1");
    w.u32(checked_u32(d.images.size(), "image count"));
    for (std::size_t k = 0; k < d.images.size(); ++k) {
        const auto& img = d.images[k];
        const std::string img_ctx = ctx + " image " + std::to_string(k);
        if (img.height == 0 || img.width == 0) throw ValidationError(img_ctx + ": empty image");
        if (img.n_classes != d.images[0].n_classes)
            throw ValidationError(img_ctx + ": class count differs from image 0");
        if (img.probs.size() != img.n_pixels() * img.n_classes)
            throw ValidationError(img_ctx + ": value count does not match shape");
        check_prob_rows(img.probs, img.n_pixels(), img.n_classes,
                        kSegmentationRowTolerance, img_ctx);
        w.u32(img.height);
        w.u32(img.width);
        w.u32(img.n_classes);
        for (double v : img.probs) w.f32(float(v));
    }
    write_file_bytes(path, w.bytes);
}

ProbMatrix flatten_segmentation(const SegmentationDump& d) {
    ProbMatrix m;
    if (d.images.empty()) throw ValidationError("segmentation dump: no images");
    m.n_classes = d.images[0].n_classes;
    std::size_t total = 0;
    for (const auto& img : d.images) total += img.n_pixels();
    m.n_samples = total;
    m.values.reserve(total * m.n_classes);
    for (const auto& img : d.images)
        m.values.insert(m.values.end(), img.probs.begin(), img.probs.end());
    return m;
}

// ----------------------------------------------------------------------------
// Manifest
// ----------------------------------------------------------------------------

const char* task_name(Task t) {
    switch (t) {
        case Task::classification: return "classification";
        case Task::segmentation: return "segmentation";
        case Task::source_selection: return "source_selection";
    }
    return "?";
}

std::optional<Task> task_from_name(std::string_view name) {
    if (name == "classification") return Task::classification;
    if (name == "segmentation") return Task::segmentation;
    if (name == "source_selection") return Task::source_selection;
    return std::nullopt;
}

namespace {

using nlohmann::json;

std::filesystem::path resolve(const std::filesystem::path& base, const std::string& rel) {
    std::filesystem::path p(rel);
    return p.is_absolute() ? p : base / p;
}

// Loads and validates one checkpoint's dumps, returning the target sample
// count so the manifest can insist on one shared target set.
std::size_t validate_checkpoint_dumps(const CheckpointRecord& cp, const Manifest& manifest,
                                      const std::string& ctx) {
    std::size_t target_samples = 0;
    if (manifest.task == Task::segmentation) {
        const auto dump = load_segmentation(cp.target_probs);
        if (dump.images[0].n_classes != manifest.n_classes)
            throw ValidationError(ctx + ": target dump has " +
                                  std::to_string(dump.images[0].n_classes) +
                                  " classes, manifest says " +
                                  std::to_string(manifest.n_classes));
        target_samples = dump.images.size();
    } else {
        const auto probs = load_prob_matrix(cp.target_probs);
        if (probs.n_classes != manifest.n_classes)
            throw ValidationError(ctx + ": target dump has " +
                                  std::to_string(probs.n_classes) +
                                  " classes, manifest says " +
                                  std::to_string(manifest.n_classes));
        target_samples = probs.n_samples;
    }

    if (cp.source_val_probs.has_value() != cp.source_val_labels.has_value())
        throw ValidationError(ctx + ": source_val_probs and source_val_labels "
                                    "must be given together");
    if (cp.source_val_probs) {
        const auto probs = load_prob_matrix(*cp.source_val_probs);
        const auto labels = load_labels(*cp.source_val_labels);
        if (probs.n_classes != manifest.n_classes)
            throw ValidationError(ctx + ": source validation dump has " +
                                  std::to_string(probs.n_classes) +
                                  " classes, manifest says " +
                                  std::to_string(manifest.n_classes));
        if (labels.size() != probs.n_samples)
            throw ValidationError(ctx + ": " + std::to_string(labels.size()) +
                                  " source labels for " + std::to_string(probs.n_samples) +
                                  " source validation rows");
        for (std::size_t i = 0; i < labels.size(); ++i)
            if (labels.labels[i] >= manifest.n_classes)
                throw ValidationError(ctx + ": source label " +
                                      std::to_string(labels.labels[i]) + " at row " +
                                      std::to_string(i) + " exceeds class count");
    }
    if (cp.target_logits) {
        const auto logits = load_logit_matrix(*cp.target_logits);
        if (logits.n_classes != manifest.n_classes)
            throw ValidationError(ctx + ": target logit dump has " +
                                  std::to_string(logits.n_classes) +
                                  " classes, manifest says " +
                                  std::to_string(manifest.n_classes));
        if (manifest.task != Task::segmentation && logits.n_samples != target_samples)
            throw ValidationError(ctx + ": target logit dump has " +
                                  std::to_string(logits.n_samples) +
                                  " rows, target probs have " +
                                  std::to_string(target_samples));
    }
    return target_samples;
}

} // namespace

Manifest load_manifest(const std::filesystem::path& path) {
    const std::string ctx = path_context(path, "manifest");
    std::ifstream in(path);
    if (!in) throw IoError("cannot open '" + path.string() + "' for reading");
    json doc;
    try {
        doc = json::parse(in);
    } catch (const json::parse_error& e) {
        throw FormatError(ctx + ": " + e.what());
    }

    Manifest manifest;
    const auto base = path.has_parent_path() ? path.parent_path()
                                             : std::filesystem::path(".");
    try {
        const auto task = task_from_name(doc.at("task").get<std::string>());
        if (!task)
            throw ValidationError(ctx + ": unknown task '" +
                                  doc.at("task").get<std::string>() + "'");
        manifest.task = *task;
        manifest.n_classes = doc.at("n_classes").get<std::size_t>();
        if (manifest.n_classes < 2)
            throw ValidationError(ctx + ": need at least 2 classes");
        if (doc.contains("target_labels"))
            manifest.target_labels = resolve(base, doc.at("target_labels").get<std::string>());
        for (const auto& entry : doc.at("checkpoints")) {
            CheckpointRecord cp;
            cp.run_id = entry.at("run_id").get<std::string>();
            cp.iteration = entry.at("iteration").get<std::uint64_t>();
            if (entry.contains("hyperparams"))
                for (const auto& [key, value] : entry.at("hyperparams").items())
                    cp.hyperparams[key] = value.get<double>();
            cp.target_probs = resolve(base, entry.at("target_probs").get<std::string>());
            if (entry.contains("source_val_probs"))
                cp.source_val_probs =
                    resolve(base, entry.at("source_val_probs").get<std::string>());
            if (entry.contains("source_val_labels"))
                cp.source_val_labels =
                    resolve(base, entry.at("source_val_labels").get<std::string>());
            if (entry.contains("target_logits"))
                cp.target_logits = resolve(base, entry.at("target_logits").get<std::string>());
            manifest.checkpoints.push_back(std::move(cp));
        }
    } catch (const json::exception& e) {
        throw FormatError(ctx + ": " + e.what());
    }

    if (manifest.checkpoints.empty()) throw ValidationError(ctx + ": no checkpoints");

    std::set<std::pair<std::string, std::uint64_t>> seen;
    for (const auto& cp : manifest.checkpoints)
        if (!seen.emplace(cp.run_id, cp.iteration).second)
            throw ValidationError(ctx + ": duplicate checkpoint run_id '" + cp.run_id +
                                  "' iteration " + std::to_string(cp.iteration));

    std::size_t target_samples = 0;
    for (const auto& cp : manifest.checkpoints) {
        const std::string cp_ctx = ctx + ", checkpoint run_id '" + cp.run_id +
                                   "' iteration " + std::to_string(cp.iteration);
        const std::size_t n = validate_checkpoint_dumps(cp, manifest, cp_ctx);
        if (target_samples == 0)
            target_samples = n;
        else if (n != target_samples)
            throw ValidationError(cp_ctx + ": target set size " + std::to_string(n) +
                                  " differs from earlier checkpoints (" +
                                  std::to_string(target_samples) + ")");
    }

    if (manifest.target_labels) {
        if (manifest.task == Task::segmentation)
            throw ValidationError(ctx + ": target_labels are not supported for "
                                        "segmentation manifests");
        const auto labels = load_labels(*manifest.target_labels);
        if (labels.size() != target_samples)
            throw ValidationError(ctx + ": " + std::to_string(labels.size()) +
                                  " target labels for " + std::to_string(target_samples) +
                                  " target samples");
        for (std::size_t i = 0; i < labels.size(); ++i)
            if (labels.labels[i] >= manifest.n_classes)
                throw ValidationError(ctx + ": target label " +
                                      std::to_string(labels.labels[i]) + " at row " +
                                      std::to_string(i) + " exceeds class count");
    }
    return manifest;
}

} // namespace nbrselect
