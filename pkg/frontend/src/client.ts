import type {
  Intrinsics,
  Keyframe,
  RenderOutput,
  RenderResponse,
  SceneDocument,
  ValidationReport,
} from "./types.js";
import { DEFAULT_INTRINSICS } from "./types.js";
import type { EditorDocument } from "./document.js";

export type FetchLike = (url: string, init?: RequestInit) => Promise<Response>;

export class ServiceError extends Error {
  constructor(
    readonly status: number,
    readonly body: unknown,
  ) {
    super(`service responded ${status}`);
  }

  /** The validation report, when the failure carried one. The service wraps
   *  reports in a `detail` envelope; client-side rejections send them bare. */
  get report(): ValidationReport | null {
    const raw = this.body as { detail?: unknown } | null;
    for (const candidate of [raw, raw?.detail]) {
      const r = candidate as Partial<ValidationReport> | undefined;
      if (r && Array.isArray(r.errors)) return r as ValidationReport;
    }
    return null;
  }
}

export class ServiceClient {
  constructor(
    readonly baseUrl: string,
    private readonly fetchImpl: FetchLike = fetch,
  ) {}

  async validate(scene: SceneDocument): Promise<ValidationReport> {
    return this.post("/v1/validate", scene) as Promise<ValidationReport>;
  }

  async storeScene(scene: SceneDocument): Promise<string> {
    const res = (await this.post("/v1/scenes", scene)) as { scene_id: string };
    return res.scene_id;
  }

  async render(
    scene: SceneDocument,
    keyframe: Keyframe,
    intrinsics: Intrinsics = DEFAULT_INTRINSICS,
    outputs: RenderOutput[] = ["semantic_png", "depth_png", "preview_png"],
  ): Promise<RenderResponse> {
    return this.post("/v1/render", {
      scene,
      intrinsics,
      pose: { position: keyframe.position, rotation_quat: keyframe.rotation_quat },
      frame_id: keyframe.frame_id,
      outputs,
    }) as Promise<RenderResponse>;
  }

  private async post(path: string, body: unknown): Promise<unknown> {
    const res = await this.fetchImpl(this.baseUrl + path, {
      method: "POST",
      headers: { "content-type": "application/json" },
      body: JSON.stringify(body),
    });
    const payload = await res.json();
    if (!res.ok) throw new ServiceError(res.status, payload);
    return payload;
  }
}

export interface PreviewState {
  /** Document revision the displayed images correspond to. */
  revision: number;
  images: RenderResponse["images"];
}

export type PreviewListener = (state: PreviewState) => void;

/** Fires render requests tagged with the document revision and drops any
 *  response that arrives after a newer revision has already been shown, so
 *  the preview never regresses during rapid editing. */
export class PreviewManager {
  private displayed: PreviewState | null = null;

  constructor(
    private readonly client: ServiceClient,
    private readonly listener: PreviewListener = () => {},
  ) {}

  get current(): PreviewState | null {
    return this.displayed;
  }

  /** Resolves with the displayed state, or null if the response was stale
   *  (superseded) by the time it arrived. Invalid documents are rejected
   *  client-side before any network traffic. */
  async requestPreview(
    doc: EditorDocument,
    keyframe: Keyframe,
    intrinsics?: Intrinsics,
  ): Promise<PreviewState | null> {
    if (!doc.isValid) {
      throw new ServiceError(422, doc.report);
    }
    const revision = doc.revision;
    const response = await this.client.render(doc.scene, keyframe, intrinsics);
    if (this.displayed && this.displayed.revision >= revision) {
      return null; // stale: an equal-or-newer preview already landed
    }
    this.displayed = { revision, images: response.images };
    this.listener(this.displayed);
    return this.displayed;
  }
}
