"""Angular undersampling aliases a line EPI; a spatial Gaussian suppresses it.

Run: python demos/aliasing.py
"""

from epilf import LinePrimitive, LineScene, blur_epi, highband_energy_ratio, make_kernel, render_line_epi


def main():
    scene = LineScene([LinePrimitive(20.0, 1.0, 0.0, 2.0), LinePrimitive(34.0, 0.5, 0.3, 3.0),
                       LinePrimitive(44.0, -0.75, 0.6, 1.5)])
    dense = render_line_epi(scene, 17, 64)
    sparse = dense[::4]
    print(f"dense EPI {dense.shape}: highband ratio {highband_energy_ratio(dense):.3e}")
    print(f"sparse EPI {sparse.shape} (disparity now up to 4 px per view): "
          f"highband ratio {highband_energy_ratio(sparse):.3e}")
    for sigma in (0.5, 1.0, 1.5, 2.0):
        blurred = blur_epi(sparse, make_kernel("gaussian", sigma))
        print(f"  after Gaussian blur, sigma {sigma}: {highband_energy_ratio(blurred):.3e}")


if __name__ == "__main__":
    main()
