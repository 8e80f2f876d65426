#pragma once

#include <iosfwd>
#include <string>
#include <vector>

#include "oscope/types.hpp"

namespace oscope::trace_io {

// Canonical trace file format, used both on the wire and on disk:
//   line 1: one-line JSON metadata object
//     {format_version:1, features:[{syscall,field}...], sample_interval_us,
//      start_time_unix_us, label?, device:{model,os_version,hostname}}
//   following lines: comma-separated unsigned decimal counters, one sample
//   instant per line, column order matching the features array.
// UTF-8, LF line endings. Serialization is deterministic: the same trace
// always produces the same bytes.

std::string write_trace(const RawTrace& trace);
void write_trace_file(const RawTrace& trace, const std::string& path);

RawTrace read_trace(const std::string& body);
RawTrace read_trace_file(const std::string& path);

// Dataset directory layout: one .trace file per window plus dataset.json
// carrying the split, the seed, and the class names.
void write_dataset_dir(const Dataset& ds, const std::string& dir,
                       std::int64_t sample_interval_us = 1000);
Dataset read_dataset_dir(const std::string& dir);

}  // namespace oscope::trace_io
