import numpy as np
import pytest
from hypothesis import given, strategies as st
from scipy import ndimage

from posematch.core.exceptions import BBoxLargerThanImage, BBoxOutOfBounds, EmptyMask, ValidationError
from posematch.core.model import BBox, Image, Mask
from posematch.modules.camera_raster import (
    ZoomTransform,
    bbox_from_mask,
    dilate_mask,
    estimate_depth_from_bbox,
    expand_bbox_to_ratio,
    infer_translation_from_bbox,
    read_bboxes_csv,
    read_pgm,
    read_ppm,
    write_bboxes_csv,
    write_pgm,
    write_ppm,
    zoom_crop,
    zoom_mask,
    zoom_observation,
)
from strategies import finite


def boxes(max_w: float = 640.0, max_h: float = 480.0):
    """Boxes inside a max_w x max_h image."""
    return st.builds(
        lambda fx, fy, w, h: BBox(fx * (max_w - w), fy * (max_h - h), w, h),
        st.floats(0.0, 1.0, **finite), st.floats(0.0, 1.0, **finite),
        st.floats(1.0, max_w, **finite), st.floats(1.0, max_h, **finite))


def random_image(seed: int = 0, width: int = 640, height: int = 480) -> Image:
    rng = np.random.default_rng(seed)
    return Image(rng.integers(0, 256, (height, width, 3), dtype=np.uint8))


class TestZoomTransform:
    @given(b=boxes())
    def test_inverse_round_trip(self, *, b: BBox) -> None:
        transform = ZoomTransform.from_bbox(b)
        grid = np.stack(np.meshgrid(np.linspace(0, 640, 17), np.linspace(0, 480, 13)), axis=-1).reshape(-1, 2)
        assert np.max(np.abs(transform.apply_inverse(transform.apply(grid)) - grid)) < 1e-9
        assert np.max(np.abs(transform.inverse().apply(transform.apply(grid)) - grid)) < 1e-9

    def test_box_corners_map_to_output_corners(self) -> None:
        transform = ZoomTransform.from_bbox(BBox(100.0, 50.0, 200.0, 150.0))
        corners = transform.apply([[100.0, 50.0], [300.0, 200.0]])
        assert corners == pytest.approx(np.array([[0.0, 0.0], [640.0, 480.0]]))

    def test_compose_matches_sequential_application(self) -> None:
        outer = ZoomTransform.from_bbox(BBox(40.0, 30.0, 320.0, 240.0))
        inner = ZoomTransform.from_bbox(BBox(100.0, 50.0, 200.0, 150.0))
        points = np.array([[0.0, 0.0], [123.5, 77.25], [640.0, 480.0]])
        assert outer.compose(inner).apply(points) == pytest.approx(outer.apply(inner.apply(points)))
        assert inner.compose(inner.inverse()).apply(points) == pytest.approx(points)

    def test_rejects_non_positive_scale(self) -> None:
        with pytest.raises(ValidationError):
            ZoomTransform(0.0, 1.0, 0.0, 0.0)


class TestExpandBBox:
    @given(b=boxes(max_w=400.0, max_h=300.0))
    def test_result_is_four_by_three_and_covers_the_box(self, *, b: BBox) -> None:
        grown = expand_bbox_to_ratio(b)
        assert grown.w / grown.h == pytest.approx(4.0 / 3.0, rel=1e-9)
        assert grown.contains(b, tol=1e-6)
        assert grown.w >= b.w - 1e-9 and grown.h >= b.h - 1e-9
        assert grown.x >= 0.0 and grown.y >= 0.0
        assert grown.x2 <= 640.0 + 1e-6 and grown.y2 <= 480.0 + 1e-6

    def test_grows_about_the_center(self) -> None:
        grown = expand_bbox_to_ratio(BBox(300.0, 200.0, 40.0, 60.0))
        assert (grown.w, grown.h) == pytest.approx((80.0, 60.0))
        assert grown.center == pytest.approx((320.0, 230.0))

    def test_wide_box_grows_in_height(self) -> None:
        grown = expand_bbox_to_ratio(BBox(100.0, 100.0, 200.0, 50.0))
        assert (grown.w, grown.h) == pytest.approx((200.0, 150.0))

    def test_box_at_the_border_is_shifted_inside(self) -> None:
        grown = expand_bbox_to_ratio(BBox(0.0, 0.0, 20.0, 60.0))
        assert (grown.x, grown.y) == (0.0, 0.0)
        assert (grown.w, grown.h) == pytest.approx((80.0, 60.0))

    def test_box_wider_than_image_is_rejected(self) -> None:
        with pytest.raises(BBoxLargerThanImage):
            expand_bbox_to_ratio(BBox(0.0, 0.0, 650.0, 100.0))


class TestZoomCrop:
    def test_full_frame_crop_is_identity(self) -> None:
        img = random_image()
        zoomed, transform = zoom_crop(img, BBox(0.0, 0.0, 640.0, 480.0))
        assert np.array_equal(zoomed.pixels, img.pixels)
        assert (transform.scale_x, transform.scale_y) == (1.0, 1.0)
        bits = img.pixels[:, :, 0] > 127
        assert np.array_equal(zoom_mask(Mask(bits), BBox(0.0, 0.0, 640.0, 480.0)).bits, bits)

    def test_output_size_and_constant_region(self) -> None:
        pixels = np.zeros((480, 640, 3), dtype=np.uint8)
        pixels[100:250, 100:300] = (10, 200, 30)
        zoomed, _ = zoom_crop(Image(pixels), BBox(120.0, 120.0, 160.0, 120.0))
        assert zoomed.pixels.shape == (480, 640, 3)
        assert np.all(zoomed.pixels == np.array([10, 200, 30], dtype=np.uint8))

    def test_two_by_upscale_of_a_mask_doubles_each_pixel(self) -> None:
        bits = np.zeros((480, 640), dtype=bool)
        bits[10, 20] = True
        zoomed = zoom_mask(Mask(bits), BBox(0.0, 0.0, 320.0, 240.0))
        assert zoomed.count == 4
        assert zoomed.bits[20:22, 40:42].all()

    @pytest.mark.parametrize('box', [BBox(100.0, 50.0, 200.0, 150.0), BBox(0.5, 0.25, 639.5, 479.625),
                                     BBox(600.0, 450.0, 40.0, 30.0), BBox(13.3, 7.1, 93.6, 70.2)])
    def test_bilinear_matches_spline_interpolation_of_order_one(self, box: BBox) -> None:
        img = random_image(5)
        zoomed, transform = zoom_crop(img, box)
        src = (np.arange(640) + 0.5 - transform.offset_x) / transform.scale_x - 0.5
        src_y = (np.arange(480) + 0.5 - transform.offset_y) / transform.scale_y - 0.5
        rows, cols = np.meshgrid(src_y, src, indexing='ij')
        for channel in range(3):
            expected = ndimage.map_coordinates(img.pixels[:, :, channel].astype(float), [rows, cols],
                                               order=1, mode='nearest')
            diff = np.abs(zoomed.pixels[:, :, channel].astype(int) - np.rint(expected).astype(int))
            assert diff.max() <= 1
            assert np.mean(diff) < 1e-3

    def test_two_by_upscale_of_a_disk_quadruples_its_area(self) -> None:
        yy, xx = np.mgrid[0:480, 0:640]
        bits = (xx + 0.5 - 320.0) ** 2 + (yy + 0.5 - 240.0) ** 2 <= 60.0 ** 2
        zoomed = zoom_mask(Mask(bits), BBox(160.0, 120.0, 320.0, 240.0))
        assert zoomed.count / Mask(bits).count == pytest.approx(4.0, rel=0.05)
        assert bbox_from_mask(zoomed).center == pytest.approx((320.0, 240.0), abs=1.0)

    def test_box_leaving_the_image_is_rejected(self) -> None:
        with pytest.raises(BBoxOutOfBounds):
            zoom_crop(random_image(), BBox(600.0, 0.0, 80.0, 60.0))

    def test_box_that_is_not_four_by_three_is_rejected(self) -> None:
        with pytest.raises(ValidationError):
            zoom_crop(random_image(), BBox(0.0, 0.0, 100.0, 100.0))

    def test_observation_uses_the_expanded_box(self) -> None:
        img = random_image(1)
        mask = Mask(np.ones((480, 640), dtype=bool))
        obs = zoom_observation(img, mask, BBox(200.0, 100.0, 50.0, 100.0))
        assert obs.crop.w / obs.crop.h == pytest.approx(4.0 / 3.0)
        assert obs.rgb.pixels.shape == (480, 640, 3)
        assert obs.mask.bits.all()


class TestDepthGuess:
    def test_center_at_principal_point_back_projects_onto_the_axis(self, cam) -> None:
        b = BBox(cam.px - 50.0, cam.py - 40.0, 100.0, 80.0)
        assert infer_translation_from_bbox(b, cam, 0.7) == pytest.approx((0.0, 0.0, 0.7))

    def test_offset_center_back_projects_through_the_pinhole(self, cam) -> None:
        b = BBox(cam.px + 100.0, cam.py, 20.0, 20.0)
        x, y, z = infer_translation_from_bbox(b, cam, 1.0)
        assert x == pytest.approx(110.0 / cam.fx)
        assert y == pytest.approx(10.0 / cam.fy)

    def test_rejects_non_positive_depth(self, cam) -> None:
        with pytest.raises(ValidationError):
            infer_translation_from_bbox(BBox(0.0, 0.0, 10.0, 10.0), cam, 0.0)

    def test_depth_from_box_diagonal(self, cam) -> None:
        b = BBox(0.0, 0.0, 60.0, 80.0)
        assert estimate_depth_from_bbox(b, 0.1, cam) == pytest.approx(0.1 * cam.fx / 100.0)

    def test_depth_is_clamped(self, cam) -> None:
        assert estimate_depth_from_bbox(BBox(0.0, 0.0, 1.0, 1.0), 1.0, cam) == 3.0
        assert estimate_depth_from_bbox(BBox(0.0, 0.0, 600.0, 450.0), 0.01, cam) == 0.2


class TestMaskUtilities:
    @staticmethod
    def blob() -> Mask:
        bits = np.zeros((60, 80), dtype=bool)
        bits[20:30, 30:35] = True
        return Mask(bits)

    @pytest.mark.parametrize('k', [0, 1])
    def test_small_kernels_leave_the_mask_unchanged(self, k: int) -> None:
        assert np.array_equal(dilate_mask(self.blob(), k).bits, self.blob().bits)

    @given(k=st.integers(0, 20))
    def test_dilation_is_monotone_in_k(self, *, k: int) -> None:
        smaller = dilate_mask(self.blob(), k).bits
        larger = dilate_mask(self.blob(), k + 1).bits
        assert np.all(self.blob().bits <= smaller)
        assert np.all(smaller <= larger)

    @pytest.mark.parametrize('k', [2, 7, 40, 41])
    def test_matches_dilation_by_the_full_square(self, k: int) -> None:
        rng = np.random.default_rng(k)
        bits = rng.random((120, 160)) > 0.995
        side = 2 * (k // 2) + 1
        expected = ndimage.binary_dilation(bits, structure=np.ones((side, side), dtype=bool))
        assert np.array_equal(dilate_mask(Mask(bits), k).bits, expected)

    def test_dilation_grows_by_half_the_kernel(self) -> None:
        dilated = dilate_mask(self.blob(), 4)
        assert bbox_from_mask(dilated) == BBox(28.0, 18.0, 9.0, 14.0)

    def test_negative_kernel_is_rejected(self) -> None:
        with pytest.raises(ValidationError):
            dilate_mask(self.blob(), -1)

    def test_tight_box(self) -> None:
        assert bbox_from_mask(self.blob()) == BBox(30.0, 20.0, 5.0, 10.0)

    def test_empty_mask_has_no_box(self) -> None:
        with pytest.raises(EmptyMask):
            bbox_from_mask(Mask.blank(8, 6))


class TestRasterIO:
    def test_ppm_round_trip(self, tmp_path) -> None:
        img = random_image(3, 32, 24)
        path = str(tmp_path / 'img.ppm')
        write_ppm(img, path)
        assert np.array_equal(read_ppm(path).pixels, img.pixels)

    def test_pgm_round_trip(self, tmp_path) -> None:
        mask = TestMaskUtilities.blob()
        path = str(tmp_path / 'mask.pgm')
        write_pgm(mask, path)
        assert np.array_equal(read_pgm(path).bits, mask.bits)

    def test_boxes_csv_round_trip(self, tmp_path) -> None:
        boxes_in = [BBox(1.5, 2.0, 30.0, 40.25), BBox(0.0, 0.0, 640.0, 480.0)]
        path = str(tmp_path / 'boxes.csv')
        write_bboxes_csv(boxes_in, path)
        assert read_bboxes_csv(path) == boxes_in
