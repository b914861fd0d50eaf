#include "udgan/core_data.hpp"

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <regex>
#include <set>
#include <sstream>

#include "udgan/rng.hpp"

namespace udgan {

namespace fs = std::filesystem;

const char* split_name(Split s) {
    switch (s) {
        case Split::train: return "train";
        case Split::query: return "query";
        case Split::gallery: return "gallery";
    }
    return "?";
}

std::vector<std::size_t> DatasetManifest::split_indices(Split s) const {
    std::vector<std::size_t> out;
    for (std::size_t i = 0; i < entries.size(); ++i) {
        if (entries[i].split == s) out.push_back(i);
    }
    return out;
}

std::vector<std::size_t> DatasetManifest::train_indices() const {
    std::vector<std::size_t> out;
    for (std::size_t i = 0; i < entries.size(); ++i) {
        if (entries[i].split == Split::train && entries[i].identity >= 0) {
            out.push_back(i);
        }
    }
    return out;
}

std::pair<int, int> parse_entry(const std::string& filename,
                                const LabelPattern& pattern) {
    const std::regex re(pattern.regex);
    std::smatch m;
    const std::string base = fs::path(filename).filename().string();
    if (!std::regex_search(base, m, re) || m.size() < 3) {
        throw DataError("cannot parse identity/camera from filename: " +
                        filename);
    }
    try {
        return {std::stoi(m[1].str()), std::stoi(m[2].str())};
    } catch (const std::exception&) {
        throw DataError("non-numeric identity/camera in filename: " + filename);
    }
}

namespace {

bool is_image_file(const fs::path& p) {
    std::string ext = p.extension().string();
    std::transform(ext.begin(), ext.end(), ext.begin(),
                   [](unsigned char c) { return std::tolower(c); });
    return ext == ".png" || ext == ".jpg" || ext == ".jpeg";
}

void scan_split(const fs::path& dir, Split split, const LabelPattern& pattern,
                DatasetManifest& manifest, std::set<std::string>& seen) {
    if (!fs::is_directory(dir)) {
        throw DataError("missing split directory: " + dir.string());
    }
    std::vector<fs::path> files;
    for (const auto& e : fs::directory_iterator(dir)) {
        if (e.is_regular_file() && is_image_file(e.path())) {
            files.push_back(e.path());
        }
    }
    std::sort(files.begin(), files.end());
    if (files.empty()) {
        throw DataError("empty split: " + dir.string());
    }
    for (const auto& f : files) {
        auto [id, cam] = parse_entry(f.filename().string(), pattern);
        if (cam < 1) {
            throw DataError("camera id must be >= 1: " + f.string());
        }
        std::string rel = f.lexically_relative(dir.parent_path()).string();
        if (!seen.insert(rel).second) {
            throw DataError("duplicate path in manifest: " + rel);
        }
        manifest.entries.push_back({rel, id, cam, split});
        manifest.num_cameras = std::max(manifest.num_cameras, cam);
    }
}

}  // namespace

DatasetManifest load_manifest(const fs::path& root, const LabelPattern& pattern,
                              const SplitLayout& layout) {
    DatasetManifest manifest;
    std::set<std::string> seen;
    scan_split(root / layout.train, Split::train, pattern, manifest, seen);
    scan_split(root / layout.query, Split::query, pattern, manifest, seen);
    scan_split(root / layout.gallery, Split::gallery, pattern, manifest, seen);

    std::set<int> train_ids;
    for (const auto& e : manifest.entries) {
        if (e.split == Split::train && e.identity >= 0) {
            train_ids.insert(e.identity);
        }
    }
    int next = 0;
    for (int id : train_ids) manifest.id_index[id] = next++;
    return manifest;
}

SyntheticFactors synthetic_identity_factors(const SyntheticSpec& spec, int id) {
    Rng rng = Rng(spec.seed).fork("identity-" + std::to_string(id));
    SyntheticFactors f{};
    // well-spread colors: coarse palette grid plus jitter
    for (int c = 0; c < 3; ++c) {
        f.body_color[c] = static_cast<std::uint8_t>(32 + rng.uniform_index(192));
    }
    // the body must dominate the frame so identity is measurable by
    // construction: half-extents drawn from [size/4, 3*size/8]
    const int min_hh = std::max(2, spec.height / 4);
    const int min_hw = std::max(2, spec.width / 4);
    const int max_hh = std::max(min_hh + 1, 3 * spec.height / 8);
    const int max_hw = std::max(min_hw + 1, 3 * spec.width / 8);
    f.body_half_h =
        min_hh + static_cast<int>(rng.uniform_index(max_hh - min_hh + 1));
    f.body_half_w =
        min_hw + static_cast<int>(rng.uniform_index(max_hw - min_hw + 1));
    return f;
}

namespace {

struct ContentFactors {
    int dx, dy;
    std::uint8_t bg_color[3];
    double brightness;
};

ContentFactors synthetic_content_factors(const SyntheticSpec& spec, int id,
                                         int img) {
    Rng rng = Rng(spec.seed).fork("content-" + std::to_string(id) + "-" +
                                  std::to_string(img));
    ContentFactors f{};
    f.dx = static_cast<int>(rng.uniform_index(std::max(2, spec.width / 4))) -
           spec.width / 8;
    f.dy = static_cast<int>(rng.uniform_index(std::max(2, spec.height / 4))) -
           spec.height / 8;
    // near-grayscale background: its level varies per image while body hue
    // stays the dominant chroma signal
    const int bg_level = static_cast<int>(rng.uniform_index(256));
    for (int c = 0; c < 3; ++c) {
        const int jitter = static_cast<int>(rng.uniform_index(21)) - 10;
        f.bg_color[c] = static_cast<std::uint8_t>(
            std::clamp(bg_level + jitter, 0, 255));
    }
    f.brightness = rng.uniform(0.75, 1.0);
    return f;
}

Image render_synthetic(const SyntheticSpec& spec, int id, int img_idx) {
    const auto idf = synthetic_identity_factors(spec, id);
    const auto cf = synthetic_content_factors(spec, id, img_idx);
    Image img;
    img.height = spec.height;
    img.width = spec.width;
    img.rgb.resize(static_cast<std::size_t>(spec.height) * spec.width * 3);
    // brightness modulates the background only, so identity pixels stay
    // bit-exact across the images of one identity
    for (int y = 0; y < spec.height; ++y) {
        for (int x = 0; x < spec.width; ++x) {
            for (int c = 0; c < 3; ++c) {
                img.at(y, x, c) = static_cast<std::uint8_t>(
                    std::lround(cf.bg_color[c] * cf.brightness));
            }
        }
    }
    const int cy = spec.height / 2 + cf.dy;
    const int cx = spec.width / 2 + cf.dx;
    for (int y = std::max(0, cy - idf.body_half_h);
         y <= std::min(spec.height - 1, cy + idf.body_half_h); ++y) {
        for (int x = std::max(0, cx - idf.body_half_w);
             x <= std::min(spec.width - 1, cx + idf.body_half_w); ++x) {
            for (int c = 0; c < 3; ++c) img.at(y, x, c) = idf.body_color[c];
        }
    }
    return img;
}

}  // namespace

DatasetManifest make_synthetic(const SyntheticSpec& spec, const fs::path& root) {
    if (spec.num_identities < 2) {
        throw DataError("make_synthetic: need at least 2 identities");
    }
    if (spec.images_per_identity < 2) {
        throw DataError("make_synthetic: need at least 2 images per identity");
    }
    if (spec.height < 8 || spec.width < 8) {
        throw DataError("make_synthetic: image size too small");
    }
    if (spec.num_cameras < 1) {
        throw DataError("make_synthetic: need at least one camera");
    }

    const SplitLayout layout;
    fs::create_directories(root / layout.train);
    fs::create_directories(root / layout.query);
    fs::create_directories(root / layout.gallery);

    DatasetManifest manifest;
    const int per = spec.images_per_identity;
    for (int id = 0; id < spec.num_identities; ++id) {
        for (int j = 0; j < per; ++j) {
            // with at least 4 images per identity the last two are held out
            Split split = Split::train;
            if (per >= 4) {
                if (j == per - 2) split = Split::query;
                if (j == per - 1) split = Split::gallery;
            }
            const int cam = 1 + j % spec.num_cameras;
            char name[64];
            std::snprintf(name, sizeof(name), "%04d_c%ds1_%06d_00.png", id,
                          cam, j);
            const fs::path dir = root / split_name(split);
            write_png(dir / name, render_synthetic(spec, id, j));
            manifest.entries.push_back(
                {(fs::path(split_name(split)) / name).string(), id, cam,
                 split});
            manifest.num_cameras = std::max(manifest.num_cameras, cam);
        }
    }
    std::set<int> train_ids;
    for (const auto& e : manifest.entries) {
        if (e.split == Split::train && e.identity >= 0) {
            train_ids.insert(e.identity);
        }
    }
    int next = 0;
    for (int id : train_ids) manifest.id_index[id] = next++;
    export_manifest_csv(manifest, root / "manifest.csv");
    return manifest;
}

DatasetSummary summarize_dataset(const DatasetManifest& manifest) {
    DatasetSummary s;
    std::set<int> ids, train_ids;
    for (const auto& e : manifest.entries) {
        ++s.images;
        if (e.identity >= 0) ids.insert(e.identity);
        switch (e.split) {
            case Split::train:
                ++s.train_images;
                if (e.identity >= 0) train_ids.insert(e.identity);
                break;
            case Split::query: ++s.query_images; break;
            case Split::gallery: ++s.gallery_images; break;
        }
        s.cameras = std::max(s.cameras, e.camera);
    }
    s.identities = static_cast<int>(ids.size());
    s.train_identities = static_cast<int>(train_ids.size());
    return s;
}

void export_manifest_csv(const DatasetManifest& manifest,
                         const fs::path& csv_path) {
    std::ofstream out(csv_path);
    if (!out) throw DataError("cannot write " + csv_path.string());
    out << "path,identity,camera,split\n";
    for (const auto& e : manifest.entries) {
        out << e.path << ',' << e.identity << ',' << e.camera << ','
            << split_name(e.split) << '\n';
    }
}

DatasetManifest import_manifest_csv(const fs::path& csv_path) {
    std::ifstream in(csv_path);
    if (!in) throw DataError("cannot read " + csv_path.string());
    std::string line;
    if (!std::getline(in, line) || line != "path,identity,camera,split") {
        throw DataError("bad manifest header in " + csv_path.string());
    }
    DatasetManifest manifest;
    std::set<std::string> seen;
    std::set<int> train_ids;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        std::stringstream ss(line);
        std::string path, id_s, cam_s, split_s;
        if (!std::getline(ss, path, ',') || !std::getline(ss, id_s, ',') ||
            !std::getline(ss, cam_s, ',') || !std::getline(ss, split_s)) {
            throw DataError("malformed manifest row: " + line);
        }
        ManifestEntry e;
        e.path = path;
        e.identity = std::stoi(id_s);
        e.camera = std::stoi(cam_s);
        if (split_s == "train") e.split = Split::train;
        else if (split_s == "query") e.split = Split::query;
        else if (split_s == "gallery") e.split = Split::gallery;
        else throw DataError("unknown split: " + split_s);
        if (!seen.insert(e.path).second) {
            throw DataError("duplicate path in manifest: " + e.path);
        }
        manifest.num_cameras = std::max(manifest.num_cameras, e.camera);
        if (e.split == Split::train && e.identity >= 0) {
            train_ids.insert(e.identity);
        }
        manifest.entries.push_back(std::move(e));
    }
    int next = 0;
    for (int id : train_ids) manifest.id_index[id] = next++;
    return manifest;
}

Tensor load_image_tensor(const fs::path& path, int h, int w,
                         const PixelNorm& norm) {
    Image img = read_image(path);
    img = resize_bilinear(img, h, w);
    Tensor t = image_to_tensor(img, norm.mean, norm.stddev);
    if (!t.all_finite()) {
        throw DataError("non-finite pixels after normalization: " +
                        path.string());
    }
    return t;
}

const Tensor& ImageStore::get(const ManifestEntry& entry) {
    auto it = cache_.find(entry.path);
    if (it != cache_.end()) return it->second;
    Tensor t = load_image_tensor(root_ / entry.path, h_, w_, norm_);
    return cache_.emplace(entry.path, std::move(t)).first->second;
}

PersonImage load_person_image(ImageStore& store,
                              const DatasetManifest& manifest,
                              std::size_t index, Domain domain) {
    const auto& entry = manifest.entries.at(index);
    PersonImage record;
    record.pixels = store.get(entry).clone();
    record.identity = entry.identity;
    record.camera = entry.camera;
    record.domain = domain;
    record.path = entry.path;
    return record;
}

Tensor stack_images(ImageStore& store, const DatasetManifest& manifest,
                    const std::vector<std::size_t>& indices) {
    if (indices.empty()) throw DataError("stack_images: empty batch");
    const std::int64_t n = static_cast<std::int64_t>(indices.size());
    const Tensor& first = store.get(manifest.entries.at(indices[0]));
    const std::int64_t per = first.numel();
    std::vector<double> data(static_cast<std::size_t>(n * per));
    for (std::int64_t i = 0; i < n; ++i) {
        const Tensor& t = store.get(manifest.entries.at(indices[i]));
        if (t.numel() != per) throw ShapeError("stack_images: size mismatch");
        std::copy_n(t.data(), per, data.data() + i * per);
    }
    return Tensor::from_vector({n, 3, first.dim(1), first.dim(2)},
                               std::move(data));
}

}  // namespace udgan
