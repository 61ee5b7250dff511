#include "twinsync/episodes.hpp"

#include <algorithm>
#include <array>
#include <fstream>
#include <numeric>
#include <random>

#include <zlib.h>

#include "twinsync/errors.hpp"

namespace twinsync::episodes {
namespace {

bool has_gz_suffix(const std::filesystem::path& p) { return p.extension() == ".gz"; }

std::uint32_t read_be32(const std::vector<std::uint8_t>& buf, std::size_t off) {
    return (std::uint32_t{buf[off]} << 24) | (std::uint32_t{buf[off + 1]} << 16) | (std::uint32_t{buf[off + 2]} << 8) |
           std::uint32_t{buf[off + 3]};
}

struct IdxFile {
    IdxHeader header;
    std::vector<std::uint8_t> bytes;
    std::size_t payload_offset = 0;
};

IdxFile parse_idx(const std::filesystem::path& path, std::uint32_t expected_magic) {
    IdxFile f;
    f.bytes = read_file_bytes(path);
    const std::string name = path.string();
    require(f.bytes.size() >= 4, ErrorKind::Format, name + ": too short for an IDX header");
    f.header.magic = read_be32(f.bytes, 0);
    // Magic: two zero bytes, a type code (0x08 = unsigned byte), a rank.
    const std::uint32_t rank = f.header.magic & 0xffu;
    require((f.header.magic & 0xffff0000u) == 0 && ((f.header.magic >> 8) & 0xffu) == 0x08 && rank >= 1,
            ErrorKind::Format, name + ": bad IDX magic");
    if (expected_magic != 0) {
        require(f.header.magic == expected_magic, ErrorKind::Format, name + ": unexpected IDX magic");
    }
    f.payload_offset = 4 + 4 * static_cast<std::size_t>(rank);
    require(f.bytes.size() >= f.payload_offset, ErrorKind::Format, name + ": truncated IDX header");
    std::size_t payload = 1;
    for (std::uint32_t d = 0; d < rank; ++d) {
        f.header.dims.push_back(read_be32(f.bytes, 4 + 4 * d));
        payload *= f.header.dims.back();
    }
    f.header.payload_bytes = payload;
    require(f.bytes.size() - f.payload_offset >= payload, ErrorKind::Format, name + ": truncated IDX payload");
    require(f.bytes.size() - f.payload_offset == payload, ErrorKind::Format, name + ": trailing bytes after IDX payload");
    f.header.crc32 = static_cast<std::uint32_t>(::crc32(0L, f.bytes.data(), static_cast<uInt>(f.bytes.size())));
    return f;
}

std::mt19937_64 seeded(std::uint64_t seed) { return std::mt19937_64(seed); }

std::vector<std::size_t> shuffled_indices(std::size_t n, std::uint64_t seed) {
    std::vector<std::size_t> idx(n);
    std::iota(idx.begin(), idx.end(), std::size_t{0});
    auto rng = seeded(seed);
    std::shuffle(idx.begin(), idx.end(), rng);
    return idx;
}

EpisodeDataset draw_episode(const std::vector<Sample>& base, std::size_t k, std::uint64_t master_seed, std::size_t count,
                            std::uint64_t shuffle_stream) {
    require(count <= base.size(), ErrorKind::InsufficientData,
            "episode needs " + std::to_string(count) + " samples, base set has " + std::to_string(base.size()));
    require(!base.empty(), ErrorKind::InsufficientData, "base set is empty");
    const std::size_t width = base.front().x.size();

    EpisodeDataset ep;
    ep.index = k;
    ep.permutation_seed = episode_seed(master_seed, k, 0);
    ep.permutation = episode_permutation(k, master_seed, width);
    const auto order = shuffled_indices(base.size(), episode_seed(master_seed, k, shuffle_stream));
    ep.samples.reserve(count);
    for (std::size_t i = 0; i < count; ++i) {
        const Sample& s = base[order[i]];
        ep.samples.push_back(Sample{ep.permutation.apply(s.x), s.y});
    }
    return ep;
}

}  // namespace

Permutation Permutation::identity(std::size_t n) {
    Permutation p;
    p.order.resize(n);
    std::iota(p.order.begin(), p.order.end(), std::size_t{0});
    return p;
}

Permutation Permutation::random(std::size_t n, std::uint64_t seed) {
    return Permutation{shuffled_indices(n, seed)};
}

bool Permutation::is_bijection() const {
    std::vector<std::size_t> sorted = order;
    std::sort(sorted.begin(), sorted.end());
    for (std::size_t i = 0; i < sorted.size(); ++i)
        if (sorted[i] != i) return false;
    return true;
}

Permutation Permutation::inverse() const {
    Permutation inv;
    inv.order.resize(order.size());
    for (std::size_t i = 0; i < order.size(); ++i) inv.order[order[i]] = i;
    return inv;
}

std::vector<double> Permutation::apply(const std::vector<double>& x) const {
    require(x.size() == order.size(), ErrorKind::Shape, "permutation width does not match feature length");
    std::vector<double> y(x.size());
    for (std::size_t i = 0; i < order.size(); ++i) y[i] = x[order[i]];
    return y;
}

std::size_t AccumulatedDataset::total_size() const {
    std::size_t n = 0;
    for (const auto& e : episodes) n += e.size();
    return n;
}

std::vector<Sample> AccumulatedDataset::flatten() const {
    std::vector<Sample> out;
    out.reserve(total_size());
    for (const auto& e : episodes) out.insert(out.end(), e.samples.begin(), e.samples.end());
    return out;
}

std::vector<std::uint8_t> read_file_bytes(const std::filesystem::path& path) {
    const std::string name = path.string();
    require(std::filesystem::exists(path), ErrorKind::Io, name + ": no such file");
    std::vector<std::uint8_t> out;
    if (has_gz_suffix(path)) {
        gzFile gz = gzopen(name.c_str(), "rb");
        require(gz != nullptr, ErrorKind::Io, name + ": cannot open");
        std::array<std::uint8_t, 1 << 16> chunk{};
        int n = 0;
        while ((n = gzread(gz, chunk.data(), static_cast<unsigned>(chunk.size()))) > 0)
            out.insert(out.end(), chunk.begin(), chunk.begin() + n);
        int err = 0;
        const char* msg = gzerror(gz, &err);
        const std::string detail = msg ? msg : "";
        gzclose(gz);
        require(n == 0 && (err == Z_OK || err == Z_STREAM_END), ErrorKind::Format, name + ": gzip error " + detail);
        return out;
    }
    std::ifstream in(path, std::ios::binary);
    require(static_cast<bool>(in), ErrorKind::Io, name + ": cannot open");
    out.assign(std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>());
    return out;
}

IdxHeader inspect_idx(const std::filesystem::path& path) { return parse_idx(path, 0).header; }

std::vector<Sample> load_idx(const std::filesystem::path& images, const std::filesystem::path& labels) {
    const IdxFile img = parse_idx(images, kIdxImagesMagic);
    const IdxFile lbl = parse_idx(labels, kIdxLabelsMagic);
    const std::size_t count = img.header.dims[0];
    require(lbl.header.dims[0] == count, ErrorKind::Format,
            labels.string() + ": holds " + std::to_string(lbl.header.dims[0]) + " labels but " + images.string() +
                " holds " + std::to_string(count) + " images");
    const std::size_t width = std::size_t{img.header.dims[1]} * img.header.dims[2];

    std::vector<Sample> out(count);
    const std::uint8_t* px = img.bytes.data() + img.payload_offset;
    const std::uint8_t* lb = lbl.bytes.data() + lbl.payload_offset;
    for (std::size_t i = 0; i < count; ++i) {
        out[i].x.resize(width);
        for (std::size_t j = 0; j < width; ++j) out[i].x[j] = static_cast<double>(px[i * width + j]) / 255.0;
        out[i].y = lb[i];
    }
    return out;
}

std::uint64_t episode_seed(std::uint64_t master_seed, std::size_t k, std::uint64_t stream) {
    std::seed_seq seq{static_cast<std::uint32_t>(master_seed), static_cast<std::uint32_t>(master_seed >> 32),
                      static_cast<std::uint32_t>(k), static_cast<std::uint32_t>(stream), 0x7717u};
    std::array<std::uint32_t, 2> out{};
    seq.generate(out.begin(), out.end());
    return (std::uint64_t{out[0]} << 32) | out[1];
}

Permutation episode_permutation(std::size_t k, std::uint64_t master_seed, std::size_t width) {
    if (k == 0) return Permutation::identity(width);
    return Permutation::random(width, episode_seed(master_seed, k, 0));
}

EpisodeDataset make_episode(const std::vector<Sample>& base, std::size_t k, std::uint64_t master_seed, std::size_t count) {
    return draw_episode(base, k, master_seed, count, 1);
}

EpisodeDataset make_test_split(const std::vector<Sample>& base, std::size_t k, std::uint64_t master_seed,
                               std::size_t count) {
    return draw_episode(base, k, master_seed, count, 2);
}

std::vector<Sample> make_synthetic(std::uint64_t seed, std::size_t classes, std::size_t dim, std::size_t count) {
    require(classes >= 2, ErrorKind::InvalidArgument, "synthetic data needs at least 2 classes");
    require(dim >= 1, ErrorKind::InvalidArgument, "synthetic data needs dim >= 1");
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> gauss(0.0, 1.0);

    // Class means: antipodal pairs along the columns of a random rotation
    // while they fit, random directions after that.
    const auto d = static_cast<Eigen::Index>(dim);
    Eigen::MatrixXd g(d, d);
    for (Eigen::Index i = 0; i < d; ++i)
        for (Eigen::Index j = 0; j < d; ++j) g(i, j) = gauss(rng);
    const Eigen::MatrixXd q = Eigen::HouseholderQR<Eigen::MatrixXd>(g).householderQ();

    std::vector<Eigen::VectorXd> means;
    for (std::size_t c = 0; c < classes; ++c) {
        Eigen::VectorXd m(d);
        if (c < 2 * dim) {
            m = q.col(static_cast<Eigen::Index>(c / 2)) * (c % 2 == 0 ? 1.0 : -1.0);
        } else {
            for (Eigen::Index i = 0; i < d; ++i) m(i) = gauss(rng);
        }
        means.push_back(m.normalized() * kSyntheticRadius);
    }

    std::vector<Sample> out(count);
    for (std::size_t i = 0; i < count; ++i) {
        const std::size_t label = i % classes;
        out[i].y = label;
        out[i].x.resize(dim);
        for (std::size_t j = 0; j < dim; ++j) {
            const double v = means[label](static_cast<Eigen::Index>(j)) + gauss(rng);
            out[i].x[j] = std::clamp(0.5 + v / (2.0 * kSyntheticSpan), 0.0, 1.0);
        }
    }
    return out;
}

AccumulatedDataset accumulate(std::vector<EpisodeDataset> episodes) {
    for (std::size_t i = 0; i < episodes.size(); ++i) {
        require(episodes[i].index == i, ErrorKind::Sequencing,
                "episode at position " + std::to_string(i) + " has index " + std::to_string(episodes[i].index));
    }
    return AccumulatedDataset{std::move(episodes)};
}

}  // namespace twinsync::episodes
