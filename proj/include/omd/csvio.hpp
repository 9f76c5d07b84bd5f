#pragma once

#include <fstream>
#include <map>
#include <string>
#include <vector>

namespace omd {

/// Minimal CSV writer: UTF-8, comma-separated, header row first.
class CsvWriter {
public:
    CsvWriter(const std::string& path, const std::vector<std::string>& header);

    void write_row(const std::vector<std::string>& cells);
    void write_row(const std::vector<double>& cells);

private:
    std::ofstream out_;
    size_t columns_;
};

struct CsvTable {
    std::vector<std::string> header;
    std::vector<std::vector<std::string>> rows;

    int column(const std::string& name) const;  // -1 if absent
};

CsvTable read_csv(const std::string& path);

std::string format_double(double v);

/// Mean and standard error (sd / sqrt(n)); n = 1 yields stderr 0.
struct MeanStderr {
    double mean = 0.0;
    double stderr_ = 0.0;
    int n = 0;
};
MeanStderr mean_stderr(const std::vector<double>& values);

}  // namespace omd
