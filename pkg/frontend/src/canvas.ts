/**
 * Stroke canvas: dark round-brush ink on a white ground, rasterized at
 * the person image's resolution so the exported PNG drops straight into
 * a job spec as the sketch.
 *
 * The rasterizer is pure (pixel buffer in, pixel buffer out) so the
 * geometry can be tested without a DOM; the thin DOM layer in main.ts
 * only collects pointer points and blits the buffer.
 */

export interface StrokePoint {
  x: number;
  y: number;
}

export interface Stroke {
  points: StrokePoint[];
  /** Brush radius in image pixels. */
  radius: number;
}

export const INK_VALUE = 16; // dark, comfortably under any stroke threshold
export const PAPER_VALUE = 255;

/**
 * RGBA buffer (width*height*4) of the strokes on white paper. Each
 * stroke is the union of disks swept along its polyline; a single-point
 * stroke is one disk.
 */
export function rasterizeStrokes(
  strokes: Stroke[],
  width: number,
  height: number,
): Uint8ClampedArray<ArrayBuffer> {
  if (width < 1 || height < 1) {
    throw new Error(`canvas dimensions must be positive, got ${width}x${height}`);
  }
  const pixels = new Uint8ClampedArray(width * height * 4);
  for (let i = 0; i < width * height; i++) {
    pixels[i * 4] = PAPER_VALUE;
    pixels[i * 4 + 1] = PAPER_VALUE;
    pixels[i * 4 + 2] = PAPER_VALUE;
    pixels[i * 4 + 3] = 255;
  }
  for (const stroke of strokes) {
    const pts = stroke.points;
    if (pts.length === 0) {
      continue;
    }
    stampDisk(pixels, width, height, pts[0], stroke.radius);
    for (let i = 1; i < pts.length; i++) {
      stampSegment(pixels, width, height, pts[i - 1], pts[i], stroke.radius);
    }
  }
  return pixels;
}

function stampDisk(
  pixels: Uint8ClampedArray,
  width: number,
  height: number,
  center: StrokePoint,
  radius: number,
): void {
  const r = Math.max(0, radius);
  const x0 = Math.max(0, Math.floor(center.x - r));
  const x1 = Math.min(width - 1, Math.ceil(center.x + r));
  const y0 = Math.max(0, Math.floor(center.y - r));
  const y1 = Math.min(height - 1, Math.ceil(center.y + r));
  for (let y = y0; y <= y1; y++) {
    for (let x = x0; x <= x1; x++) {
      const dx = x - center.x;
      const dy = y - center.y;
      if (dx * dx + dy * dy <= r * r) {
        const o = (y * width + x) * 4;
        pixels[o] = INK_VALUE;
        pixels[o + 1] = INK_VALUE;
        pixels[o + 2] = INK_VALUE;
      }
    }
  }
}

function stampSegment(
  pixels: Uint8ClampedArray,
  width: number,
  height: number,
  a: StrokePoint,
  b: StrokePoint,
  radius: number,
): void {
  const length = Math.hypot(b.x - a.x, b.y - a.y);
  const steps = Math.max(1, Math.ceil(length));
  for (let i = 0; i <= steps; i++) {
    const t = i / steps;
    stampDisk(pixels, width, height, { x: a.x + (b.x - a.x) * t, y: a.y + (b.y - a.y) * t }, radius);
  }
}

/** True when at least one pixel carries ink. */
export function hasInk(pixels: Uint8ClampedArray): boolean {
  for (let i = 0; i < pixels.length; i += 4) {
    if (pixels[i] !== PAPER_VALUE) {
      return true;
    }
  }
  return false;
}

/**
 * Scales pointer coordinates from the on-screen canvas box to image
 * pixels, so strokes land where the cursor is regardless of how the
 * canvas is displayed.
 */
export function toImageCoords(
  clientX: number,
  clientY: number,
  box: { left: number; top: number; width: number; height: number },
  imageWidth: number,
  imageHeight: number,
): StrokePoint {
  return {
    x: ((clientX - box.left) / box.width) * imageWidth,
    y: ((clientY - box.top) / box.height) * imageHeight,
  };
}

/** Renders the strokes into a PNG blob at the given resolution (DOM
 * environments only). */
export async function strokesToPngBlob(
  strokes: Stroke[],
  width: number,
  height: number,
): Promise<Blob> {
  const pixels = rasterizeStrokes(strokes, width, height);
  const canvas = document.createElement("canvas");
  canvas.width = width;
  canvas.height = height;
  const ctx = canvas.getContext("2d");
  if (!ctx) {
    throw new Error("2d canvas context unavailable");
  }
  ctx.putImageData(new ImageData(pixels, width, height), 0, 0);
  return new Promise<Blob>((resolve, reject) => {
    canvas.toBlob((blob) => {
      if (blob) {
        resolve(blob);
      } else {
        reject(new Error("PNG export failed"));
      }
    }, "image/png");
  });
}
