#include "mmv/hash.hpp"

#include <openssl/sha.h>

#include <sstream>

#include "mmv/measure_io.hpp"

namespace mmv {

std::string sha1_hex(std::string_view bytes) {
  unsigned char md[SHA_DIGEST_LENGTH];
  SHA1(reinterpret_cast<const unsigned char*>(bytes.data()), bytes.size(), md);
  static const char* hex = "0123456789abcdef";
  std::string out;
  out.reserve(2 * SHA_DIGEST_LENGTH);
  for (unsigned char c : md) {
    out.push_back(hex[c >> 4]);
    out.push_back(hex[c & 15]);
  }
  return out;
}

std::string git_blob_sha1(std::string_view content) {
  std::string buf = "blob " + std::to_string(content.size());
  buf.push_back('\0');
  buf.append(content);
  return sha1_hex(buf);
}

std::string measure_hash(const EmpiricalMeasure& mu) {
  std::ostringstream os;
  write_measure_csv(os, mu);
  return sha1_hex(os.str()).substr(0, 12);
}

}  // namespace mmv
