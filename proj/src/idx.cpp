#include "basil/idx.hpp"

#include <algorithm>
#include <fstream>
#include <iterator>

#include "basil/errors.hpp"

namespace basil {

namespace {

constexpr std::uint32_t kImageMagic = 0x00000803;
constexpr std::uint32_t kLabelMagic = 0x00000801;

std::uint32_t read_be32(std::span<const std::uint8_t> bytes, std::size_t offset) {
    if (bytes.size() < offset + 4) throw ParseError("truncated IDX header", bytes.size());
    return (std::uint32_t{bytes[offset]} << 24) | (std::uint32_t{bytes[offset + 1]} << 16) |
           (std::uint32_t{bytes[offset + 2]} << 8) | std::uint32_t{bytes[offset + 3]};
}

}  // namespace

IdxImages parse_idx_images(std::span<const std::uint8_t> bytes) {
    if (bytes.empty()) throw ParseError("empty IDX image file", 0);
    if (read_be32(bytes, 0) != kImageMagic) throw ParseError("bad IDX image magic number", 0);
    IdxImages img;
    img.count = read_be32(bytes, 4);
    img.rows = read_be32(bytes, 8);
    img.cols = read_be32(bytes, 12);
    std::size_t need = img.count * img.rows * img.cols;
    if (bytes.size() - 16 < need) throw ParseError("truncated IDX image data", bytes.size());
    img.pixels.assign(bytes.begin() + 16, bytes.begin() + 16 + static_cast<std::ptrdiff_t>(need));
    return img;
}

std::vector<std::uint8_t> parse_idx_labels(std::span<const std::uint8_t> bytes) {
    if (bytes.empty()) throw ParseError("empty IDX label file", 0);
    if (read_be32(bytes, 0) != kLabelMagic) throw ParseError("bad IDX label magic number", 0);
    std::size_t count = read_be32(bytes, 4);
    if (bytes.size() - 8 < count) throw ParseError("truncated IDX label data", bytes.size());
    return {bytes.begin() + 8, bytes.begin() + 8 + static_cast<std::ptrdiff_t>(count)};
}

std::vector<std::uint8_t> read_binary_file(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ConfigError("cannot open " + path.string());
    return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

Dataset load_idx(const std::filesystem::path& images, const std::filesystem::path& labels, std::size_t limit,
                 int classes) {
    auto img = parse_idx_images(read_binary_file(images));
    auto lab = parse_idx_labels(read_binary_file(labels));
    // The label count lives at byte 4 of the label file.
    if (lab.size() != img.count)
        throw ParseError("label count " + std::to_string(lab.size()) + " does not match image count " +
                             std::to_string(img.count),
                         4);
    if (img.rows * img.cols == 0) throw ParseError("IDX images have zero size", 8);
    std::size_t n = (limit == 0 || limit > img.count) ? img.count : limit;
    int k = classes;
    if (k == 0) k = lab.empty() ? 1 : *std::max_element(lab.begin(), lab.end()) + 1;
    std::size_t dim = img.rows * img.cols;
    Dataset d(dim, k);
    std::vector<double> x(dim);
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = 0; j < dim; ++j) x[j] = img.pixels[i * dim + j] / 255.0;
        d.add(x, lab[i]);
    }
    return d;
}

}  // namespace basil
