"""
Scoring a confusion matrix and a set of runs
============================================

Per-class and macro F1 from the confusion matrix of the submitted CNN10,
then a results-table cell from several run scores.
"""

from serpann.metrics import ConfusionMatrix, aggregate_runs, f1_from_confusion, format_mean_std

counts = [[244, 2, 5],   # neutral
          [14, 8, 2],    # non-neutral male
          [6, 1, 26]]    # non-neutral female
report = f1_from_confusion(ConfusionMatrix(counts))
for name, p, r, f in zip(("neutral", "nn-male", "nn-female"), report.per_class_precision,
                         report.per_class_recall, report.per_class_f1):
    print(f"{name:10s} precision {p:.3f} recall {r:.3f} F1 {f:.3f}")
print(f"macro F1 {report.macro_f1:.4f}")

# Support-weighted averaging would be dominated by the neutral class.
support = [sum(row) for row in counts]
weighted = sum(f * n for f, n in zip(report.per_class_f1, support)) / sum(support)
print(f"support-weighted F1 {weighted:.4f}")

scores = [0.74, 0.86, 0.79, 0.83, 0.77, 0.81]
mean, std = aggregate_runs(scores)
print("table cell:", format_mean_std(mean, std))
