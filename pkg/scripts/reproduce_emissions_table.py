"""Per-kiln daily and seasonal emissions under both production modes.

    python3 scripts/reproduce_emissions_table.py [--config emissions.json]
"""

import argparse

from kiln_atlas.emissions import (POLLUTANTS, EmissionFactors, ProductionParams,
                                  daily_production_per_kiln, emission_profile_for_kiln,
                                  load_emission_config)


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--config", help='JSON with optional "factors" and "production" objects')
    args = ap.parse_args()
    factors, params = load_emission_config(args.config) if args.config else (EmissionFactors(), ProductionParams())

    for reproduce in (True, False):
        bricks = daily_production_per_kiln(params, reproduce)
        prof = emission_profile_for_kiln(None, params, factors, reproduce)
        label = "published production" if reproduce else "computed production"
        print(f"\n{label}: {bricks:,.2f} bricks/day, {prof.daily_brick_mass_kg:,.1f} kg/day, "
              f"{prof.working_days:g} working days")
        print(f"{'pollutant':<10}{'g/kg':>7}{'kg/day':>12}{'kg/year':>14}")
        for p in POLLUTANTS:
            print(f"{p:<10}{factors.g_per_kg[p]:>7.1f}{prof.daily_kg[p]:>12.2f}{prof.seasonal_kg[p]:>14,.2f}")


if __name__ == "__main__":
    main()
