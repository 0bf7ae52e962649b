#ifndef GMLEVEL_CHECKPOINT_HPP
#define GMLEVEL_CHECKPOINT_HPP

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <string_view>

#include "gmlevel/baseline.hpp"
#include "gmlevel/error.hpp"
#include "gmlevel/gmvae.hpp"

namespace gmlevel {

inline constexpr std::string_view kCodeVersion = "0.3.0";
inline constexpr int kCheckpointFormatVersion = 1;

/// How an artifact was produced. Embedded in checkpoints and reports.
struct Provenance {
  std::string command;
  std::map<std::string, std::string> flags;
  std::uint64_t seed = 0;
  std::string version{kCodeVersion};

  bool operator==(const Provenance&) const = default;
};

/// "gmvae" or "vae-gmm".
std::string checkpoint_format(std::string_view json_text);

/// JSON text; doubles are written with 17 significant digits so a load gives
/// back the exact bits.
std::string save_gmvae(const GmvaeModel& model, const Provenance& provenance);
GmvaeModel load_gmvae(std::string_view json_text, Provenance* provenance = nullptr);

std::string save_vae_gmm(const VaeGmm& model, const Provenance& provenance);
VaeGmm load_vae_gmm(std::string_view json_text, Provenance* provenance = nullptr);

/// Whole-file helpers; failures raise `on_error`.
std::string read_text_file(const std::filesystem::path& path,
                           ErrorCode on_error = ErrorCode::CheckpointError);
void write_text_file(const std::filesystem::path& path, std::string_view text);

}  // namespace gmlevel

#endif  // GMLEVEL_CHECKPOINT_HPP
