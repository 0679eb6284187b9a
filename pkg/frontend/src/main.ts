// DOM wiring for the review console. Element construction and event handling
// live here; decoding, overlay pixels, session state, and report rendering
// are pure modules with their own tests.

import { ApiClient, type ReviewItem } from './api.js';
import { buildOverlayRgba } from './overlay.js';
import { renderReportHtml } from './report.js';
import { decodeRle, MalformedRle } from './rle.js';
import { ReviewSession } from './state.js';

const UPSCALE_MAX = 512; // small fixture images are integer-upscaled to stay visible

function context2d(canvas: HTMLCanvasElement): CanvasRenderingContext2D | null {
  // jsdom and other context-free environments either throw or return null
  try {
    return canvas.getContext('2d');
  } catch {
    return null;
  }
}

interface Elements {
  canvas: HTMLCanvasElement;
  entity: HTMLElement;
  hypernyms: HTMLElement;
  context: HTMLElement;
  position: HTMLElement;
  status: HTMLElement;
  report: HTMLElement;
  opacity: HTMLInputElement;
}

function grabElements(): Elements {
  const get = (id: string) => {
    const el = document.getElementById(id);
    if (!el) throw new Error(`missing #${id}`);
    return el;
  };
  return {
    canvas: get('viewer') as HTMLCanvasElement,
    entity: get('entity'),
    hypernyms: get('hypernyms'),
    context: get('context'),
    position: get('position'),
    status: get('status'),
    report: get('report'),
    opacity: get('opacity') as HTMLInputElement,
  };
}

export class Console {
  private session: ReviewSession;
  private els: Elements;
  private image: HTMLImageElement | null = null;

  constructor(private api: ApiClient) {
    this.session = new ReviewSession(api);
    this.els = grabElements();
  }

  async start(): Promise<void> {
    await this.session.load();
    await this.showCurrent();
    await this.refreshReport();
    document.addEventListener('keydown', (event) => this.onKey(event));
    this.els.opacity.addEventListener('input', () => {
      void this.drawOverlay();
    });
  }

  private onKey(event: KeyboardEvent): void {
    if (event.key === 'y') void this.verdict('correct');
    else if (event.key === 'n') void this.verdict('incorrect');
    else if (event.key === 's') {
      this.session.skip();
      void this.showCurrent();
    }
  }

  async verdict(value: 'correct' | 'incorrect'): Promise<void> {
    const result = await this.session.submit(value);
    if (result.status === 'conflict') {
      this.setStatus(`conflict: ${result.detail} (refetched, press s to skip)`);
      return;
    }
    if (result.status === 'queued') {
      this.setStatus('offline; verdict queued for retry');
    } else if (result.status === 'blocked') {
      this.setStatus('too many unsynced verdicts; retrying sync');
      return;
    } else {
      this.setStatus('');
    }
    await this.showCurrent();
    await this.refreshReport();
  }

  private setStatus(text: string): void {
    this.els.status.textContent = text;
  }

  async showCurrent(): Promise<void> {
    const item = this.session.current;
    this.els.position.textContent = item
      ? `${this.session.position + 1} / ${this.session.total}`
      : `done (${this.session.total} reviewed)`;
    if (!item) return;
    this.renderContext(item);
    await this.loadImage(item);
    await this.drawOverlay();
  }

  private renderContext(item: ReviewItem): void {
    this.els.entity.textContent = item.entity_label;
    if (item.hypernyms.length) {
      this.els.hypernyms.textContent = `a kind of ${item.hypernyms.join(', ')}`;
      this.els.hypernyms.hidden = false;
    } else {
      this.els.hypernyms.textContent = '';
      this.els.hypernyms.hidden = true;
    }
    this.els.context.textContent =
      `${item.reference_kind} reference / ${item.source_model} model / ${item.split} split` +
      (item.query ? ` — "${item.query}"` : '');
  }

  private loadImage(item: ReviewItem): Promise<void> {
    return new Promise((resolve) => {
      const img = new Image();
      img.onload = () => {
        this.image = img;
        resolve();
      };
      img.onerror = () => {
        this.image = null;
        this.setStatus('image failed to load (press s to skip, or wait and retry)');
        resolve();
      };
      img.src = this.api.imageUrl(item.annotation_id);
    });
  }

  async drawOverlay(): Promise<void> {
    const item = this.session.current;
    if (!item) return;
    const [height, width] = item.rle.size;
    let bits: Uint8Array;
    try {
      bits = decodeRle(item.rle);
    } catch (err) {
      if (err instanceof MalformedRle) {
        this.setStatus(`malformed mask (${err.message}); press s to skip`);
        return;
      }
      throw err;
    }
    const scale = Math.max(1, Math.floor(UPSCALE_MAX / Math.max(height, width)));
    const canvas = this.els.canvas;
    canvas.width = width * scale;
    canvas.height = height * scale;
    const ctx = context2d(canvas);
    if (!ctx) return;
    ctx.imageSmoothingEnabled = false;
    if (this.image) {
      ctx.drawImage(this.image, 0, 0, canvas.width, canvas.height);
    } else {
      ctx.fillStyle = '#222';
      ctx.fillRect(0, 0, canvas.width, canvas.height);
    }
    const opacity = Number(this.els.opacity.value) / 100;
    const rgba = buildOverlayRgba(bits, height, width, opacity);
    const overlay = new OffscreenCanvas(width, height);
    const octx = overlay.getContext('2d');
    if (!octx) return;
    octx.putImageData(new ImageData(new Uint8ClampedArray(rgba), width, height), 0, 0);
    ctx.drawImage(overlay, 0, 0, canvas.width, canvas.height);
  }

  async refreshReport(): Promise<void> {
    const report = await this.api.getReport();
    this.els.report.innerHTML = renderReportHtml(report);
  }
}

export async function boot(base = ''): Promise<Console> {
  const app = new Console(new ApiClient(base));
  await app.start();
  return app;
}

declare global {
  interface Window {
    reviewConsole?: Console;
  }
}

if (typeof document !== 'undefined' && document.getElementById('viewer')) {
  void boot().then((app) => {
    window.reviewConsole = app;
  });
}
