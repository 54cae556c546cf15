#include "finest/assets.hpp"

#include <fstream>
#include <sstream>

#include "finest/error.hpp"
#include "finest/text.hpp"

namespace finest {

AssetStore::AssetStore(std::filesystem::path root) : root_(std::move(root)) {}

AssetStore AssetStore::shipped() { return AssetStore(FINEST_DEFAULT_ASSETS_DIR); }

std::filesystem::path AssetStore::path(std::string_view relative) const { return root_ / std::string(relative); }

bool AssetStore::exists(std::string_view relative) const { return std::filesystem::is_regular_file(path(relative)); }

std::string AssetStore::load(std::string_view relative) const {
    const auto p = path(relative);
    std::ifstream in(p, std::ios::binary);
    if (!in) throw Error(Errc::missing_template, "asset not found: " + p.string());
    std::ostringstream buf;
    buf << in.rdbuf();
    return buf.str();
}

std::string AssetStore::hash(std::string_view relative) const { return sha256_hex(load(relative)); }

}  // namespace finest
