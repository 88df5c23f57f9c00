#pragma once

#include <string>

namespace protoeeg {

// CRC32 of a file's bytes as 8 lowercase hex digits.
std::string file_checksum(const std::string& path);

}  // namespace protoeeg
