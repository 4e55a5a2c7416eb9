#ifndef MSADAPT_REPORT_HPP
#define MSADAPT_REPORT_HPP

#include <string>
#include <vector>

#include "msadapt/adapt_protocols.hpp"

namespace msadapt {

// Per-subject rows: strategy,fold,epoch,subject_id,dsc,lf1_precision,
// lf1_recall,lf1,gt_volume_mm3,pred_volume_mm3. Row counts are checked
// against fold arithmetic before anything is written.
void write_raw_csv(const std::vector<StrategyResult>& results, const std::string& path);

// strategy,epoch,mean_dsc,mean_lf1,volume_correlation (blank when undefined).
void write_aggregate_csv(const std::vector<StrategyResult>& results, const std::string& path);

// dsc.svg / lf1.svg / vc.svg under dir: per-strategy curves over epochs with
// each strategy's epoch-0 value as a dashed horizontal reference.
void write_metric_curves(const std::vector<StrategyResult>& results, const std::string& dir);

std::string format_metric(double v);  // fixed 6-decimal form used in all CSVs

}  // namespace msadapt

#endif
