from dronedet.synthetic import (CELL, GRID, PLANT_FX, PLANT_FY, PLANT_H, PLANT_W,  # noqa: F401
                                plant_image, plant_params, planted_box)
