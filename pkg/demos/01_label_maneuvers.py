"""Label lateral and longitudinal maneuvers on a scripted traffic scene.

Generates a deterministic synthetic freeway scene with known lane-change
and braking events, then runs the rule-based labeler and compares what
it recovers against the script.
"""

from trajpred import maneuvers, synth

cfg = synth.SynthConfig(n_vehicles=10, duration_s=40.0,
                        pct_lane_changes=0.3, pct_braking=0.2)
store, events = synth.generate(cfg, seed=7)

print(f"scene: {len(store)} vehicles, {len(events)} scripted events\n")
for ev in events:
    print(" ", ev)

lc = events[0]
print(f"\nlabels at a few probe frames (vehicle {lc.vehicle_id} "
      "changes lanes):")
track = store.tracks[lc.vehicle_id]
crossover = lc.crossover_frame
for t in (crossover - 60, crossover - 20, crossover, crossover + 20,
          crossover + 60):
    lab = maneuvers.label(track, t)
    print(f"  frame {t:4d}: lateral={lab.lateral.name:<5s} "
          f"longitudinal={lab.longitudinal.name}")

# the lateral label switches on inside +/-40 frames of the lane crossover
inside = maneuvers.label_lateral(track, crossover - 40)
outside = maneuvers.label_lateral(track, crossover - 41)
print(f"\nat crossover-40: {inside.name}; at crossover-41: {outside.name}")
