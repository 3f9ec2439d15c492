# Polygon annotations -> ground-truth masks
#
# Each labeled scene is a JSON record with contrail polygons in pixel
# coordinates (row, col). Masks fill the pixels whose centers fall inside any
# polygon, then get resized with nearest-neighbor so they stay binary.

# %%
import numpy as np

from contrailseg import parse_scene_records, render_ground_truth, resize_mask, serialize_scene_records

doc = b"""[
  {"scene_id": "demo-1", "width": 24, "height": 12, "is_night": false,
   "polygons": [[[1, 2], [3, 22], [5, 21], [3, 1]],
                [[6, 4], [11, 9], [10, 10], [5, 5]]],
   "waypoints": [{"row": 2.0, "col": 12.0, "flight": "KL1234"}]},
  {"scene_id": "demo-2", "width": 24, "height": 12, "is_night": true,
   "polygons": [], "waypoints": []}
]"""
records = parse_scene_records(doc)
for rec in records:
    print(rec.scene_id, "polygons:", len(rec.polygons), "contrail:", rec.has_contrail)

# %%
# Serialization round-trips exactly.
assert parse_scene_records(serialize_scene_records(records)) == records

# %%
mask = render_ground_truth(records[0])
for row in mask:
    print("".join("#" if v else "." for v in row))

# %%
# Upsample 2x: every pixel becomes a 2x2 block.
big = resize_mask(mask, 24, 48)
print(big.shape, big.sum(), "=", 4 * mask.sum())

# %%
# Bad input is rejected with the offending record and field.
try:
    parse_scene_records(b'[{"scene_id": "x", "width": 4, "height": 4, "is_night": false,'
                        b' "polygons": [[[0, 0], [1, 1]]], "waypoints": []}]')
except ValueError as exc:
    print("rejected:", exc)
