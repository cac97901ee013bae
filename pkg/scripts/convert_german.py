"""Convert the categorical German credit table to the 24-feature numeric layout.

Fifteen attributes are kept as integers: category codes map to their rank
(A11 -> 1, A34 -> 4) and the credit amount is divided by 100 and rounded.
Nine indicator columns cover other debtors, housing, job and purpose.
Output has no header and the label (1 good, 2 bad) in the last column.

Usage: python scripts/convert_german.py german_credit.csv out.csv
"""

import argparse
import csv

INTEGER = [
    "status_of_existing_checking_account", "duration_in_month", "credit_history",
    "credit_amount", "savings_account/bonds", "present_employment_since",
    "personal_status_and_sex", "present_residence_since", "property", "age_in_years",
    "other_installment_plans", "number_of_existing_credits_at_this_bank",
    "number_of_people_being_liable_to_provide_maintenance_for", "telephone",
    "foreign_worker",
]
INDICATORS = [
    ("other_debtors/guarantors", "A102"), ("other_debtors/guarantors", "A103"),
    ("housing", "A152"), ("housing", "A153"),
    ("job", "A172"), ("job", "A173"),
    ("purpose", "A40"), ("purpose", "A41"), ("purpose", "A43"),
]


def to_int(value, column):
    if column == "credit_amount":
        return int(round(int(value) / 100))
    # category codes end in their rank: A11 -> 1, A34 -> 4, A121 -> 1
    return int(value[-1]) if value.startswith("A") else int(value)


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("src")
    ap.add_argument("dst")
    args = ap.parse_args()
    with open(args.src, newline="") as fh:
        rows = list(csv.DictReader(fh))
    with open(args.dst, "w", newline="") as fh:
        out = csv.writer(fh, lineterminator="\n")
        for r in rows:
            feats = [to_int(r[c], c) for c in INTEGER]
            feats += [int(r[c] == code) for c, code in INDICATORS]
            out.writerow(feats + [int(r["credit_risk"])])


if __name__ == "__main__":
    main()
