#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <string_view>

namespace evojudge {

// Media type used for the feature-vector "images" consumed by the synthetic
// oracle backend. They are small JSON documents.
inline constexpr std::string_view kSyntheticImageType = "application/vnd.evojudge.synthetic+json";

// An image either held inline (bytes + media type) or referenced by path.
struct ImageRef {
    std::string path;
    std::string bytes;
    std::string media_type;

    [[nodiscard]] bool is_inline() const noexcept { return !bytes.empty(); }

    static ImageRef from_path(std::string path) { return ImageRef{std::move(path), {}, {}}; }
    static ImageRef from_bytes(std::string bytes, std::string media_type = {});

    bool operator==(const ImageRef&) const = default;
};

// Media type from magic bytes; nullopt when the bytes are not a recognised image.
std::optional<std::string> sniff_media_type(std::string_view bytes);

// Returns an inline copy of `ref`, reading the file relative to `root` when needed.
// Throws NotFoundError for a missing file, ValidationError for undecodable bytes.
ImageRef load_image(const ImageRef& ref, const std::filesystem::path& root);

std::string read_file(const std::filesystem::path& path);

} // namespace evojudge
