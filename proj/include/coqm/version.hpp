#pragma once

namespace coqm {

inline constexpr const char* kVersion = "0.1.0";
inline constexpr const char* kCsvSchemaVersion = "coqm-csv-v1";
inline constexpr const char* kRunRecordSchemaVersion = "coqm-run-record-v1";

} // namespace coqm
