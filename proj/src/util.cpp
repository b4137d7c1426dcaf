#include "lineage/util.hpp"

#include <cstdio>
#include <fstream>
#include <sstream>
#include <vector>

#include <openssl/evp.h>

#include "lineage/error.hpp"

namespace lineage {

std::string_view to_string(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::InvalidPrompt: return "invalid-prompt";
    case ErrorKind::InvalidInput: return "invalid-input";
    case ErrorKind::Parse: return "parse-error";
    case ErrorKind::MissingFile: return "missing-file";
    case ErrorKind::DuplicateId: return "duplicate-id";
    case ErrorKind::MissingVocabulary: return "missing-vocabulary";
    case ErrorKind::DimensionMismatch: return "dimension-mismatch";
    case ErrorKind::EmptyFingerprint: return "empty-fingerprint";
    case ErrorKind::Transport: return "transport-error";
    case ErrorKind::BadResponse: return "bad-response";
    case ErrorKind::InvariantViolation: return "invariant-violation";
    case ErrorKind::DegenerateColumn: return "degenerate-column";
    case ErrorKind::Checkpoint: return "checkpoint-error";
    case ErrorKind::Generation: return "generation-error";
    case ErrorKind::ProbeIncomplete: return "probe-incomplete";
    case ErrorKind::UnknownPrompt: return "unknown-prompt";
    case ErrorKind::Config: return "config-error";
  }
  return "error";
}

std::string base64_encode(std::string_view bytes) {
  std::string out(4 * ((bytes.size() + 2) / 3), '\0');
  const int n = EVP_EncodeBlock(reinterpret_cast<unsigned char*>(out.data()),
                                reinterpret_cast<const unsigned char*>(bytes.data()),
                                static_cast<int>(bytes.size()));
  out.resize(static_cast<std::size_t>(n));
  return out;
}

std::string base64_decode(std::string_view text) {
  if (text.size() % 4 != 0) throw Error(ErrorKind::InvalidInput, "base64 length not a multiple of 4");
  std::string out(3 * text.size() / 4, '\0');
  const int n = EVP_DecodeBlock(reinterpret_cast<unsigned char*>(out.data()),
                                reinterpret_cast<const unsigned char*>(text.data()),
                                static_cast<int>(text.size()));
  if (n < 0) throw Error(ErrorKind::InvalidInput, "malformed base64");
  // EVP_DecodeBlock keeps the padding bytes as zeros.
  std::size_t pad = 0;
  if (!text.empty() && text.back() == '=') ++pad;
  if (text.size() > 1 && text[text.size() - 2] == '=') ++pad;
  out.resize(static_cast<std::size_t>(n) - pad);
  return out;
}

std::string format_fixed(double value, int decimals) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*f", decimals, value);
  return buf;
}

void write_file_atomic(const std::filesystem::path& path, std::string_view content) {
  auto tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw Error(ErrorKind::MissingFile, "cannot write " + tmp.string());
    out.write(content.data(), static_cast<std::streamsize>(content.size()));
    if (!out) throw Error(ErrorKind::MissingFile, "short write to " + tmp.string());
  }
  std::filesystem::rename(tmp, path);
}

std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorKind::MissingFile, "cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

}  // namespace lineage
