#include "evojudge/image.hpp"

#include "evojudge/errors.hpp"

#include <fstream>
#include <sstream>

namespace evojudge {

ImageRef ImageRef::from_bytes(std::string bytes, std::string media_type) {
    if (media_type.empty()) {
        media_type = sniff_media_type(bytes).value_or("application/octet-stream");
    }
    return ImageRef{{}, std::move(bytes), std::move(media_type)};
}

std::optional<std::string> sniff_media_type(std::string_view bytes) {
    auto starts = [&](std::string_view magic) { return bytes.substr(0, magic.size()) == magic; };
    if (starts("\x89PNG\r\n\x1a\n")) return "image/png";
    if (starts("\xff\xd8\xff")) return "image/jpeg";
    if (starts("GIF87a") || starts("GIF89a")) return "image/gif";
    if (bytes.size() >= 12 && starts("RIFF") && bytes.substr(8, 4) == "WEBP") return "image/webp";
    const auto first = bytes.find_first_not_of(" \t\r\n");
    if (first != std::string_view::npos && bytes[first] == '{' &&
        bytes.find("\"synthetic-image\"") != std::string_view::npos) {
        return std::string(kSyntheticImageType);
    }
    return std::nullopt;
}

std::string read_file(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw NotFoundError("cannot open " + path.string());
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

ImageRef load_image(const ImageRef& ref, const std::filesystem::path& root) {
    if (ref.is_inline()) {
        if (!sniff_media_type(ref.bytes)) throw ValidationError("undecodable image bytes");
        return ref;
    }
    if (ref.path.empty()) throw ValidationError("image reference has neither bytes nor path");
    const std::filesystem::path p = std::filesystem::path(ref.path).is_absolute() ? std::filesystem::path(ref.path) : root / ref.path;
    if (!std::filesystem::exists(p)) throw NotFoundError("missing image file " + p.string());
    auto bytes = read_file(p);
    auto type = sniff_media_type(bytes);
    if (!type) throw ValidationError("undecodable image " + p.string());
    return ImageRef{ref.path, std::move(bytes), *type};
}

} // namespace evojudge
