#include "seqfusion/zoo.hpp"

#include <nlohmann/json.hpp>
#include <openssl/evp.h>

#include <fstream>
#include <mutex>
#include <numeric>
#include <optional>
#include <set>
#include <sstream>

namespace seqfusion {

namespace fs = std::filesystem;

std::string read_file(const fs::path& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw Error("cannot open '" + path.string() + "'");
    std::stringstream buf;
    buf << f.rdbuf();
    return buf.str();
}

namespace {

void write_file(const fs::path& path, const std::string& bytes) {
    std::ofstream f(path, std::ios::binary | std::ios::trunc);
    if (!f) throw Error("cannot write '" + path.string() + "'");
    f << bytes;
}

}  // namespace

std::string sha256_hex(const std::string& bytes) {
    unsigned char md[EVP_MAX_MD_SIZE];
    unsigned int len = 0;
    if (EVP_Digest(bytes.data(), bytes.size(), md, &len, EVP_sha256(), nullptr) != 1) throw Error("sha256 failed");
    static const char* hex = "0123456789abcdef";
    std::string out;
    out.reserve(len * 2);
    for (unsigned int i = 0; i < len; ++i) {
        out.push_back(hex[md[i] >> 4]);
        out.push_back(hex[md[i] & 0xF]);
    }
    return out;
}

// ---- TransferMatrix IO -----------------------------------------------------

std::string save_transfer_matrix(const TransferMatrix& tm) {
    tm.validate();
    nlohmann::json j;
    j["datasets"] = tm.dataset_names;
    nlohmann::json g = nlohmann::json::array();
    for (Eigen::Index i = 0; i < tm.g.rows(); ++i) {
        nlohmann::json row = nlohmann::json::array();
        for (Eigen::Index k = 0; k < tm.g.cols(); ++k) row.push_back(tm.g(i, k));
        g.push_back(std::move(row));
    }
    j["g"] = std::move(g);
    return j.dump(1) + "\n";
}

TransferMatrix load_transfer_matrix(const std::string& bytes) {
    try {
        const auto j = nlohmann::json::parse(bytes);
        TransferMatrix tm;
        tm.dataset_names = j.at("datasets").get<std::vector<std::string>>();
        const auto n = static_cast<Eigen::Index>(tm.dataset_names.size());
        const auto& g = j.at("g");
        if (static_cast<Eigen::Index>(g.size()) != n) throw Error("transfer matrix: g must be square over the dataset list");
        tm.g.resize(n, n);
        for (Eigen::Index i = 0; i < n; ++i) {
            const auto& row = g[static_cast<std::size_t>(i)];
            if (static_cast<Eigen::Index>(row.size()) != n) throw Error("transfer matrix: ragged row " + std::to_string(i));
            for (Eigen::Index k = 0; k < n; ++k) tm.g(i, k) = row[static_cast<std::size_t>(k)].get<double>();
        }
        tm.validate();
        return tm;
    } catch (const nlohmann::json::exception& e) {
        throw Error(std::string("malformed transfer matrix: ") + e.what());
    }
}

void save_transfer_matrix_file(const TransferMatrix& tm, const fs::path& path) {
    write_file(path, save_transfer_matrix(tm));
}

TransferMatrix load_transfer_matrix_file(const fs::path& path) { return load_transfer_matrix(read_file(path)); }

// ---- manifest ----------------------------------------------------------------

void ZooManifest::validate() const {
    if (entries.empty()) throw Error("zoo manifest has no entries");
    std::set<std::string> ids;
    const auto d = entries.front().representation.size();
    for (const auto& e : entries) {
        if (!ids.insert(e.model_id).second) throw Error("duplicate model_id '" + e.model_id + "'");
        if (e.representation.size() != d) {
            throw Error("entry '" + e.model_id + "' has representation dimension " +
                        std::to_string(e.representation.size()) + ", expected " + std::to_string(d));
        }
        if (!e.representation.allFinite()) throw Error("entry '" + e.model_id + "' has a non-finite representation");
    }
}

std::string save_manifest(const ZooManifest& m) {
    m.validate();
    nlohmann::json j;
    j["format_version"] = m.format_version;
    j["extractor"] = m.extractor;
    nlohmann::json entries = nlohmann::json::array();
    for (const auto& e : m.entries) {
        nlohmann::json r = nlohmann::json::array();
        for (Eigen::Index i = 0; i < e.representation.size(); ++i) r.push_back(e.representation(i));
        entries.push_back({{"model_id", e.model_id},
                           {"file", e.file},
                           {"digest", e.digest},
                           {"source_dataset", e.source_dataset},
                           {"input_len", e.input_len},
                           {"horizon", e.horizon},
                           {"representation", std::move(r)}});
    }
    j["entries"] = std::move(entries);
    return j.dump(1) + "\n";
}

ZooManifest load_manifest(const std::string& bytes) {
    try {
        const auto j = nlohmann::json::parse(bytes);
        ZooManifest m;
        m.format_version = j.at("format_version").get<int>();
        if (m.format_version != 1) throw Error("unsupported zoo format_version " + std::to_string(m.format_version));
        m.extractor = j.at("extractor").get<std::string>();
        for (const auto& e : j.at("entries")) {
            ModelEntry me;
            me.model_id = e.at("model_id").get<std::string>();
            me.file = e.at("file").get<std::string>();
            me.digest = e.at("digest").get<std::string>();
            me.source_dataset = e.at("source_dataset").get<std::string>();
            me.input_len = e.at("input_len").get<int>();
            me.horizon = e.at("horizon").get<int>();
            const auto r = e.at("representation").get<std::vector<double>>();
            me.representation = Eigen::Map<const Vector>(r.data(), static_cast<Eigen::Index>(r.size()));
            m.entries.push_back(std::move(me));
        }
        m.validate();
        return m;
    } catch (const nlohmann::json::exception& e) {
        throw Error(std::string("malformed zoo manifest: ") + e.what());
    }
}

// ---- representations and transferability ------------------------------------

Representation compute_model_representation(const ExtractorParams& extractor, const Dataset& source, int sample_count,
                                             std::uint64_t seed) {
    const Eigen::Index L = extractor.dims.window_len;
    const auto& m = source.series.values;
    if (m.rows() < L) {
        throw Error("dataset '" + source.name + "' has no window of length " + std::to_string(L));
    }
    if (sample_count < 1) throw Error("sample_count must be >= 1");
    const auto per_channel = static_cast<std::uint64_t>(m.rows() - L + 1);
    const std::uint64_t total = per_channel * static_cast<std::uint64_t>(m.cols());
    const auto n = static_cast<std::uint64_t>(sample_count) < total ? static_cast<std::uint64_t>(sample_count) : total;
    std::vector<std::uint64_t> idx(total);
    std::iota(idx.begin(), idx.end(), std::uint64_t{0});
    Rng rng(seed);
    if (n < total) {
        for (std::uint64_t k = 0; k < n; ++k) std::swap(idx[k], idx[k + rng.below(total - k)]);
    }
    Matrix windows(L, static_cast<Eigen::Index>(n));
    for (std::uint64_t k = 0; k < n; ++k) {
        const auto c = static_cast<Eigen::Index>(idx[k] / per_channel);
        const auto s = static_cast<Eigen::Index>(idx[k] % per_channel);
        windows.col(static_cast<Eigen::Index>(k)) = normalize(m.col(c).segment(s, L)).first;
    }
    return encode_batch(extractor, windows).rowwise().mean();
}

std::pair<Dataset, Dataset> split_holdout(const Dataset& data, double holdout_fraction) {
    if (!(holdout_fraction > 0.0 && holdout_fraction < 1.0)) throw Error("holdout fraction must be in (0, 1)");
    const Eigen::Index T = data.series.length();
    const auto head = static_cast<Eigen::Index>(std::floor((1.0 - holdout_fraction) * static_cast<double>(T)));
    if (head < 1 || head >= T) throw Error("dataset '" + data.name + "' too short to split");
    Dataset a = data;
    Dataset b = data;
    a.series.values = data.series.values.topRows(head);
    b.series.values = data.series.values.bottomRows(T - head);
    return {std::move(a), std::move(b)};
}

double evaluate_normalized_mse(const Predictor& model, const MultivariateSeries& series) {
    const Batch pairs = extract_training_pairs(series, model.input_len(), model.horizon(), 1);
    if (pairs.inputs.cols() == 0) throw Error("no evaluation windows");
    double acc = 0.0;
    for (Eigen::Index k = 0; k < pairs.inputs.cols(); ++k) {
        acc += (model.predict(pairs.inputs.col(k)) - pairs.targets.col(k)).squaredNorm();
    }
    return acc / static_cast<double>(pairs.targets.size());
}

TransferMatrix compute_transfer_matrix(const std::vector<Dataset>& datasets, const ForecasterSpec& spec,
                                       const TrainConfig& cfg, double holdout_fraction) {
    if (datasets.size() < 2) throw Error("transfer matrix needs at least 2 datasets");
    std::vector<Dataset> heads;
    std::vector<Dataset> tails;
    for (const auto& d : datasets) {
        auto [h, t] = split_holdout(d, holdout_fraction);
        heads.push_back(std::move(h));
        tails.push_back(std::move(t));
    }
    const auto n = static_cast<Eigen::Index>(datasets.size());
    TransferMatrix tm;
    tm.g.resize(n, n);
    for (Eigen::Index i = 0; i < n; ++i) {
        tm.dataset_names.push_back(datasets[static_cast<std::size_t>(i)].name);
        std::optional<Forecaster> model;
        try {
            model.emplace(train(spec, heads[static_cast<std::size_t>(i)], cfg).model);
        } catch (const Error& e) {
            throw Error("transfer matrix: training on '" + datasets[static_cast<std::size_t>(i)].name + "' failed: " + e.what());
        }
        for (Eigen::Index j = 0; j < n; ++j) {
            try {
                tm.g(i, j) = 1.0 - evaluate_normalized_mse(*model, tails[static_cast<std::size_t>(j)].series);
            } catch (const Error& e) {
                throw Error("transfer matrix: evaluating on '" + datasets[static_cast<std::size_t>(j)].name + "' failed: " + e.what());
            }
        }
    }
    std::set<std::string> names(tm.dataset_names.begin(), tm.dataset_names.end());
    if (names.size() != tm.dataset_names.size()) throw Error("transfer matrix: dataset names must be unique");
    tm.validate();
    return tm;
}

// ---- Zoo ---------------------------------------------------------------------

struct Zoo::State {
    ExtractorParams extractor;
    std::vector<ModelEntry> entries;
    fs::path dir;
    mutable std::mutex mu;
    mutable std::vector<std::shared_ptr<const Predictor>> cache;
};

Zoo::Zoo(ExtractorParams extractor, std::vector<ModelEntry> entries, std::vector<std::shared_ptr<const Predictor>> models)
    : state_(std::make_shared<State>()) {
    if (entries.size() != models.size()) throw Error("zoo: one model per entry required");
    ZooManifest check;
    check.entries = entries;
    check.validate();
    for (std::size_t i = 0; i < entries.size(); ++i) {
        if (!models[i]) throw Error("zoo: null model for '" + entries[i].model_id + "'");
        if (entries[i].representation.size() != extractor.dims.dim) {
            throw Error("entry '" + entries[i].model_id + "' representation dimension does not match extractor d");
        }
    }
    state_->extractor = std::move(extractor);
    state_->entries = std::move(entries);
    state_->cache = std::move(models);
}

Zoo Zoo::load(const fs::path& dir) {
    const fs::path manifest_path = dir / "zoo.json";
    if (!fs::exists(manifest_path)) throw Error("no zoo.json in '" + dir.string() + "'");
    ZooManifest m = load_manifest(read_file(manifest_path));
    ExtractorParams ex = load_extractor_file(dir / m.extractor);
    for (const auto& e : m.entries) {
        if (e.representation.size() != ex.dims.dim) {
            throw Error("entry '" + e.model_id + "' representation dimension does not match extractor d=" +
                        std::to_string(ex.dims.dim));
        }
        const fs::path p = dir / e.file;
        if (!fs::exists(p)) throw Error("entry '" + e.model_id + "': missing weights file '" + p.string() + "'");
        if (sha256_hex(read_file(p)) != e.digest) throw Error("entry '" + e.model_id + "': digest mismatch");
    }
    Zoo z;
    z.state_ = std::make_shared<State>();
    z.state_->extractor = std::move(ex);
    z.state_->entries = std::move(m.entries);
    z.state_->dir = dir;
    z.state_->cache.resize(z.state_->entries.size());
    return z;
}

const ExtractorParams& Zoo::extractor() const { return state_->extractor; }
const std::vector<ModelEntry>& Zoo::entries() const { return state_->entries; }
std::size_t Zoo::size() const { return state_->entries.size(); }

int Zoo::index_of(const std::string& model_id) const {
    for (std::size_t i = 0; i < state_->entries.size(); ++i) {
        if (state_->entries[i].model_id == model_id) return static_cast<int>(i);
    }
    return -1;
}

std::shared_ptr<const Predictor> Zoo::model(std::size_t i) const {
    if (i >= state_->entries.size()) throw Error("zoo: model index out of range");
    std::lock_guard<std::mutex> lock(state_->mu);
    auto& slot = state_->cache[i];
    if (!slot) {
        const auto& e = state_->entries[i];
        const std::string bytes = read_file(state_->dir / e.file);
        if (sha256_hex(bytes) != e.digest) throw Error("entry '" + e.model_id + "': digest mismatch");
        Forecaster f = [&] {
            try {
                return load_forecaster(bytes);
            } catch (const Error& err) {
                throw Error("entry '" + e.model_id + "': " + err.what());
            }
        }();
        if (f.input_len() != e.input_len || f.horizon() != e.horizon) {
            throw Error("entry '" + e.model_id + "': shape does not match manifest");
        }
        slot = std::make_shared<const Forecaster>(std::move(f));
    }
    return slot;
}

ZooManifest build_zoo(const std::vector<fs::path>& model_files, const fs::path& extractor_file,
                      const std::vector<Dataset>& sources, const BuildZooOptions& opts, const fs::path& out_dir) {
    if (model_files.empty()) throw Error("build_zoo: no models given");
    const std::string ex_bytes = read_file(extractor_file);
    const ExtractorParams ex = load_extractor(ex_bytes);

    ZooManifest m;
    m.extractor = "extractor.json";
    std::vector<std::string> model_bytes;
    std::set<std::string> ids;
    for (std::size_t i = 0; i < model_files.size(); ++i) {
        const auto& path = model_files[i];
        const std::string bytes = read_file(path);
        const Forecaster f = [&] {
            try {
                return load_forecaster(bytes);
            } catch (const Error& e) {
                throw Error(path.string() + ": " + e.what());
            }
        }();
        ModelEntry e;
        e.model_id = path.stem().string();
        if (!ids.insert(e.model_id).second) throw Error("duplicate model_id '" + e.model_id + "'");
        e.file = "models/" + e.model_id + ".json";
        e.digest = sha256_hex(bytes);
        e.source_dataset = f.source_dataset();
        e.input_len = f.input_len();
        e.horizon = f.horizon();
        const Dataset* src = nullptr;
        for (const auto& d : sources) {
            if (d.name == f.source_dataset()) src = &d;
        }
        if (!src) throw Error("model '" + e.model_id + "': source dataset '" + f.source_dataset() + "' not supplied");
        e.representation = compute_model_representation(ex, *src, opts.samples, opts.seed + 0x9E37ULL * (i + 1));
        m.entries.push_back(std::move(e));
        model_bytes.push_back(bytes);
    }
    const std::string manifest = save_manifest(m);

    fs::create_directories(out_dir / "models");
    write_file(out_dir / "extractor.json", ex_bytes);
    for (std::size_t i = 0; i < m.entries.size(); ++i) write_file(out_dir / m.entries[i].file, model_bytes[i]);
    write_file(out_dir / "zoo.json", manifest);
    return m;
}

}  // namespace seqfusion
