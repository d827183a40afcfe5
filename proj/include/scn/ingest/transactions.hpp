#pragma once

#include "scn/ingest/domain.hpp"

#include <filesystem>
#include <ostream>
#include <string>
#include <vector>

namespace scn {

/// Dataset size summary: record, consumer and distinct payee counts.
struct DatasetCounts {
  std::size_t records = 0;
  std::size_t consumers = 0;
  std::size_t companies = 0;
};

struct TransactionLog {
  std::vector<TransactionRecord> records;
  DatasetCounts counts;
};

DatasetCounts count_dataset(const std::vector<TransactionRecord>& records);

std::string format_date(const std::chrono::year_month_day& date);
/// Strict YYYY-MM-DD; throws DataError when malformed or not a real date.
std::chrono::year_month_day parse_date(std::string_view text);

/// Reads transactions.csv with header
/// consumer_id,date,expense,type,category,description,payee.
/// Leading '#' comment lines are skipped. An empty file yields an empty log.
TransactionLog load_transactions(const std::filesystem::path& path, const Taxonomy& taxonomy);
TransactionLog read_transactions(std::istream& in, const Taxonomy& taxonomy,
                                 const std::string& source = "<stream>");

/// `provenance` is written first as "# " comment lines, which readers skip.
void write_transactions(std::ostream& out, const std::vector<TransactionRecord>& records,
                        std::string_view provenance = {});
void save_transactions(const std::filesystem::path& path,
                       const std::vector<TransactionRecord>& records,
                       std::string_view provenance = {});

}  // namespace scn
