#include "uktl/data.hpp"

#include "uktl/parallel.hpp"
#include "uktl/rng.hpp"
#include "uktl/subspace.hpp"

#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>
#include <stdexcept>

namespace uktl {

using nlohmann::json;

void write_manifest(const DatasetManifest& m, const std::filesystem::path& path) {
    json j;
    j["dims"] = m.dims;
    j["num_classes"] = m.num_classes;
    j["entries"] = json::array();
    for (const auto& e : m.entries) {
        j["entries"].push_back({{"path", e.path}, {"label", e.label}});
    }
    std::ofstream f(path, std::ios::binary);
    if (!f) {
        throw std::runtime_error("cannot open for writing: " + path.string());
    }
    f << j.dump(2) << "\n";
}

DatasetManifest read_manifest(const std::filesystem::path& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) {
        throw std::runtime_error("cannot open manifest: " + path.string());
    }
    json j;
    try {
        f >> j;
    } catch (const json::exception& e) {
        throw std::runtime_error("manifest parse error in " + path.string() + ": " + e.what());
    }
    DatasetManifest m;
    try {
        m.dims = j.at("dims").get<std::vector<int>>();
        m.num_classes = j.at("num_classes").get<int>();
        for (const auto& e : j.at("entries")) {
            m.entries.push_back({e.at("path").get<std::string>(), e.at("label").get<int>()});
        }
    } catch (const json::exception& e) {
        throw std::runtime_error("manifest schema error in " + path.string() + ": " + e.what());
    }
    checked_numel(m.dims);
    if (m.num_classes < 1) {
        throw std::runtime_error("manifest num_classes must be >= 1: " + path.string());
    }
    return m;
}

Dataset load_dataset(const std::filesystem::path& manifest_path) {
    const DatasetManifest m = read_manifest(manifest_path);
    const std::filesystem::path base = manifest_path.parent_path();

    Dataset ds;
    ds.dims = m.dims;
    ds.num_classes = m.num_classes;
    ds.tensors.resize(m.entries.size());
    ds.labels.resize(m.entries.size());

    parallel_for(static_cast<std::int64_t>(m.entries.size()), [&](std::int64_t i) {
        const auto& e = m.entries[static_cast<size_t>(i)];
        Tensor t = read_tns(base / e.path);
        if (t.dims != m.dims) {
            throw std::runtime_error("tensor dims of " + e.path + " do not match manifest dims");
        }
        if (e.label < 0 || e.label >= m.num_classes) {
            throw std::runtime_error("label out of range for " + e.path);
        }
        ds.tensors[static_cast<size_t>(i)] = std::move(t);
        ds.labels[static_cast<size_t>(i)] = e.label;
    });
    return ds;
}

void SyntheticSpec::validate() const {
    if (num_classes < 1 || per_class < 1) {
        throw std::invalid_argument("synthetic spec: need >= 1 class and >= 1 sample per class");
    }
    checked_numel(dims);
    const int min_dim = *std::min_element(dims.begin(), dims.end());
    if (signal_rank < 1 || signal_rank > min_dim) {
        throw std::invalid_argument("synthetic spec: signal rank too large for dims");
    }
    if (noise_level < 0.0) {
        throw std::invalid_argument("synthetic spec: noise level must be >= 0");
    }
}

// Expands t along the given mode through factors (I_m x r): Y_(m) = A T_(m).
static Tensor mode_product(const Tensor& t, const Matrix& factors, int mode) {
    Matrix unf = matricize(t, mode);
    Matrix out = factors * unf;
    std::vector<int> dims = t.dims;
    dims[mode] = static_cast<int>(factors.rows());
    return refold(out, dims, mode);
}

namespace {

struct GeneratedData {
    std::vector<Tensor> tensors;  // class-major order
    std::vector<int> labels;
    std::vector<size_t> train_idx;
    std::vector<size_t> test_idx;
};

GeneratedData generate_all(const SyntheticSpec& spec) {
    spec.validate();
    Rng rng(spec.seed);
    const int modes = static_cast<int>(spec.dims.size());

    std::vector<std::vector<Matrix>> class_bases(static_cast<size_t>(spec.num_classes));
    for (int k = 0; k < spec.num_classes; ++k) {
        for (int m = 0; m < modes; ++m) {
            class_bases[static_cast<size_t>(k)].push_back(
                random_orthonormal(spec.dims[m], spec.signal_rank, rng));
        }
    }

    GeneratedData out;
    const std::vector<int> core_dims(static_cast<size_t>(modes), spec.signal_rank);
    const double target_norm = std::sqrt(static_cast<double>(checked_numel(spec.dims)));
    for (int k = 0; k < spec.num_classes; ++k) {
        for (int s = 0; s < spec.per_class; ++s) {
            Tensor core(core_dims);
            for (double& v : core.values) v = rng.gaussian();
            Tensor signal = core;
            for (int m = 0; m < modes; ++m) {
                signal = mode_product(signal, class_bases[static_cast<size_t>(k)][static_cast<size_t>(m)], m);
            }
            const double norm = frobenius_norm(signal);
            if (norm > 0.0) signal *= target_norm / norm;
            for (double& v : signal.values) v += spec.noise_level * rng.gaussian();
            out.tensors.push_back(std::move(signal));
            out.labels.push_back(k);
        }
    }

    // class-balanced 80/20 split by seeded shuffle
    const int train_per_class =
        std::max(1, static_cast<int>(std::lround(0.8 * spec.per_class)));
    for (int k = 0; k < spec.num_classes; ++k) {
        std::vector<size_t> idx(static_cast<size_t>(spec.per_class));
        for (int s = 0; s < spec.per_class; ++s) {
            idx[static_cast<size_t>(s)] = static_cast<size_t>(k * spec.per_class + s);
        }
        for (size_t i = idx.size() - 1; i > 0; --i) {
            std::swap(idx[i], idx[rng.uniform_index(i + 1)]);
        }
        std::vector<size_t> tr(idx.begin(), idx.begin() + train_per_class);
        std::vector<size_t> te(idx.begin() + train_per_class, idx.end());
        std::sort(tr.begin(), tr.end());
        std::sort(te.begin(), te.end());
        out.train_idx.insert(out.train_idx.end(), tr.begin(), tr.end());
        out.test_idx.insert(out.test_idx.end(), te.begin(), te.end());
    }
    return out;
}

}  // namespace

GenResult gen_synthetic(const SyntheticSpec& spec, const std::filesystem::path& out_dir) {
    GeneratedData data = generate_all(spec);
    std::filesystem::create_directories(out_dir);

    std::vector<std::string> names(data.tensors.size());
    for (size_t i = 0; i < data.tensors.size(); ++i) {
        std::ostringstream name;
        name << "c" << data.labels[i] << "_s" << (i % static_cast<size_t>(spec.per_class)) << ".tns";
        names[i] = name.str();
        write_tns(data.tensors[i], out_dir / names[i]);
    }

    GenResult res;
    res.train.dims = spec.dims;
    res.train.num_classes = spec.num_classes;
    res.test.dims = spec.dims;
    res.test.num_classes = spec.num_classes;
    for (size_t i : data.train_idx) res.train.entries.push_back({names[i], data.labels[i]});
    for (size_t i : data.test_idx) res.test.entries.push_back({names[i], data.labels[i]});

    res.train_manifest = out_dir / "train.json";
    res.test_manifest = out_dir / "test.json";
    write_manifest(res.train, res.train_manifest);
    write_manifest(res.test, res.test_manifest);
    return res;
}

Dataset gen_synthetic_memory(const SyntheticSpec& spec, bool train_split) {
    GeneratedData data = generate_all(spec);
    Dataset ds;
    ds.dims = spec.dims;
    ds.num_classes = spec.num_classes;
    const auto& idx = train_split ? data.train_idx : data.test_idx;
    for (size_t i : idx) {
        ds.tensors.push_back(data.tensors[i]);
        ds.labels.push_back(data.labels[i]);
    }
    return ds;
}

Tensor normalize_skeleton(const Tensor& seq, int ref_joint) {
    if (seq.order() != 3) {
        throw std::invalid_argument("normalize_skeleton: expected axes x joints x frames");
    }
    const int axes = seq.dims[0];
    const int joints = seq.dims[1];
    const int frames = seq.dims[2];
    if (ref_joint < 0 || ref_joint >= joints) {
        throw std::invalid_argument("normalize_skeleton: reference joint out of range");
    }

    Tensor out = seq;
    auto at = [&](int a, int i, int f) -> double& {
        return out.values[(static_cast<size_t>(a) * joints + i) * frames + f];
    };
    for (int a = 0; a < axes; ++a) {
        for (int f = 0; f < frames; ++f) {
            const double ref = at(a, ref_joint, f);
            for (int i = 0; i < joints; ++i) at(a, i, f) -= ref;
        }
    }
    for (int a = 0; a < axes; ++a) {
        double max_abs = 0.0;
        for (int i = 0; i < joints; ++i) {
            for (int f = 0; f < frames; ++f) max_abs = std::max(max_abs, std::abs(at(a, i, f)));
        }
        if (max_abs > 0.0) {
            for (int i = 0; i < joints; ++i) {
                for (int f = 0; f < frames; ++f) at(a, i, f) /= max_abs;
            }
        }
    }
    return out;
}

Tensor temporal_resample(const Tensor& seq, int target_frames) {
    if (target_frames < 1) {
        throw std::invalid_argument("temporal_resample: target length must be >= 1");
    }
    const int frames = seq.dims.back();
    if (frames == target_frames) return seq;

    std::vector<int> dims = seq.dims;
    dims.back() = target_frames;
    Tensor out(dims);
    const std::int64_t outer = seq.numel() / frames;
    for (int i = 0; i < target_frames; ++i) {
        int src;
        if (frames < target_frames) {
            src = i % frames;  // cyclic repetition
        } else if (target_frames == 1) {
            src = 0;
        } else {
            src = static_cast<int>(std::llround(static_cast<double>(i) * (frames - 1) /
                                                (target_frames - 1)));
        }
        for (std::int64_t o = 0; o < outer; ++o) {
            out.values[static_cast<size_t>(o * target_frames + i)] =
                seq.values[static_cast<size_t>(o * frames + src)];
        }
    }
    return out;
}

std::vector<Tensor> temporal_blocks(const Tensor& seq, int block_len, int stride) {
    const int frames = seq.dims.back();
    if (block_len < 1 || block_len > frames) {
        throw std::invalid_argument("temporal_blocks: block length must be in [1, T]");
    }
    if (stride < 1) {
        throw std::invalid_argument("temporal_blocks: stride must be >= 1");
    }

    std::vector<int> dims = seq.dims;
    dims.back() = block_len;
    const std::int64_t outer = seq.numel() / frames;

    std::vector<Tensor> blocks;
    for (int start = 0; start + block_len <= frames; start += stride) {
        Tensor b(dims);
        for (std::int64_t o = 0; o < outer; ++o) {
            for (int t = 0; t < block_len; ++t) {
                b.values[static_cast<size_t>(o * block_len + t)] =
                    seq.values[static_cast<size_t>(o * frames + start + t)];
            }
        }
        blocks.push_back(std::move(b));
    }
    return blocks;
}

std::string matrix_to_csv(const Matrix& m) {
    std::string out;
    for (Eigen::Index i = 0; i < m.rows(); ++i) {
        for (Eigen::Index j = 0; j < m.cols(); ++j) {
            if (j > 0) out += ',';
            out += format_double(m(i, j));
        }
        out += '\n';
    }
    return out;
}

void write_csv(const Matrix& m, const std::filesystem::path& path) {
    std::ofstream f(path, std::ios::binary);
    if (!f) {
        throw std::runtime_error("cannot open for writing: " + path.string());
    }
    f << matrix_to_csv(m);
}

}  // namespace uktl
