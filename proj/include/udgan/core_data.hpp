#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "udgan/image.hpp"
#include "udgan/tensor.hpp"

namespace udgan {

enum class Domain { source, target };
enum class Split { train, query, gallery };

const char* split_name(Split s);

// One dataset record. Pixels are loaded lazily by ImageStore; the manifest
// itself carries only metadata.
struct PersonImage {
    Tensor pixels;  // [3,H,W], normalized
    int identity = 0;  // >= 0 real identity, < 0 distractor
    int camera = 1;
    Domain domain = Domain::source;
    std::string path;
};

struct ManifestEntry {
    std::string path;
    int identity = 0;
    int camera = 1;
    Split split = Split::train;
};

struct DatasetManifest {
    std::vector<ManifestEntry> entries;
    int num_cameras = 0;
    // dense remapping of train-split (non-distractor) identities to [0,K)
    std::map<int, int> id_index;

    std::vector<std::size_t> split_indices(Split s) const;
    // train entries eligible for identity batches (distractors excluded)
    std::vector<std::size_t> train_indices() const;
    int num_train_identities() const { return static_cast<int>(id_index.size()); }
};

// Filename -> (identity, camera) extraction. The default is the
// Market1501-style `<pid>_c<cam>...` convention; `identity` may be negative
// (distractor).
struct LabelPattern {
    std::string regex = R"(^(-?\d+)_c(\d+))";
};

std::pair<int, int> parse_entry(const std::string& filename,
                                const LabelPattern& pattern);

struct SplitLayout {
    std::string train = "train";
    std::string query = "query";
    std::string gallery = "gallery";
};

DatasetManifest load_manifest(const std::filesystem::path& root,
                              const LabelPattern& pattern = {},
                              const SplitLayout& layout = {});

// Deterministic synthetic identity x content dataset. Identity factors
// (body color, body shape) are functions of the identity index; content
// factors (position offset, background color, brightness) vary per image.
struct SyntheticSpec {
    int num_identities = 16;
    int images_per_identity = 8;
    int height = 48;
    int width = 16;
    std::uint64_t seed = 0;
    int num_cameras = 3;
};

struct SyntheticFactors {
    std::uint8_t body_color[3];
    int body_half_h, body_half_w;  // shape
};

SyntheticFactors synthetic_identity_factors(const SyntheticSpec& spec, int id);

// Materializes images under root/{train,query,gallery} and returns the
// manifest; also writes root/manifest.csv.
DatasetManifest make_synthetic(const SyntheticSpec& spec,
                               const std::filesystem::path& root);

struct DatasetSummary {
    int images = 0;
    int identities = 0;  // distinct non-distractor identities
    int cameras = 0;
    int train_images = 0, query_images = 0, gallery_images = 0;
    int train_identities = 0;
};

DatasetSummary summarize_dataset(const DatasetManifest& manifest);

void export_manifest_csv(const DatasetManifest& manifest,
                         const std::filesystem::path& csv_path);
DatasetManifest import_manifest_csv(const std::filesystem::path& csv_path);

// --- pixel pipeline ---------------------------------------------------------

struct PixelNorm {
    double mean = 0.5;
    double stddev = 0.5;
};

// read -> bilinear resize to (h, w) -> normalize
Tensor load_image_tensor(const std::filesystem::path& path, int h, int w,
                         const PixelNorm& norm);

// Loads and caches normalized image tensors for a manifest.
class ImageStore {
public:
    ImageStore(std::filesystem::path root, int h, int w, PixelNorm norm)
        : root_(std::move(root)), h_(h), w_(w), norm_(norm) {}

    const Tensor& get(const ManifestEntry& entry);
    int height() const { return h_; }
    int width() const { return w_; }
    const PixelNorm& norm() const { return norm_; }

private:
    std::filesystem::path root_;
    int h_, w_;
    PixelNorm norm_;
    std::map<std::string, Tensor> cache_;
};

// Stacks per-entry [3,H,W] tensors into a constant batch [N,3,H,W].
Tensor stack_images(ImageStore& store, const DatasetManifest& manifest,
                    const std::vector<std::size_t>& indices);

// Materializes one manifest entry as a full record.
PersonImage load_person_image(ImageStore& store,
                              const DatasetManifest& manifest,
                              std::size_t index, Domain domain);

}  // namespace udgan
