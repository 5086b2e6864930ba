/**
 * Client for the file server's documented endpoints. Methods never throw
 * on an HTTP error status: every result carries the status so callers
 * (and tests) can compare outcomes directly. Authorization decisions are
 * entirely the server's — this layer only reports them.
 *
 * In development mode the identity is passed through the server's dev
 * headers; in production the browser's TLS client certificate applies and
 * the identity fields stay empty.
 */

export interface Identity {
  dn?: string;
  fqans?: string[];
}

export interface ApiResult {
  status: number;
  ok: boolean;
}

export interface BodyResult extends ApiResult {
  body: Uint8Array;
  text: string;
  contentType: string;
}

export interface ListingEntry {
  name: string;
  kind: "file" | "directory";
  size: number;
  modified: number;
}

export interface ListingResult extends ApiResult {
  entries: ListingEntry[];
}

export interface AclResult extends BodyResult {
  /** Control file the ACL came from, or "default". */
  source: string;
}

export interface HistoryRecord {
  author: string | null;
  timestamp: number;
  sequence: number;
  size: number;
  version: string;
  path: string;
}

export interface HistoryResult extends ApiResult {
  records: HistoryRecord[];
}

function toBody(content: Uint8Array | string): ArrayBuffer {
  const bytes = typeof content === "string"
    ? new TextEncoder().encode(content) : content;
  return bytes.buffer.slice(
    bytes.byteOffset, bytes.byteOffset + bytes.byteLength) as ArrayBuffer;
}

export class ApiClient {
  constructor(public baseUrl: string, public identity: Identity = {}) {}

  private headers(extra: Record<string, string> = {}): Headers {
    const h = new Headers(extra);
    if (this.identity.dn) {
      h.set("X-Grid-DN", this.identity.dn);
      for (const fqan of this.identity.fqans ?? []) {
        h.append("X-Grid-Fqan", fqan);
      }
    }
    return h;
  }

  private url(path: string, query = ""): string {
    const encoded = path.split("/").map(encodeURIComponent).join("/");
    return this.baseUrl.replace(/\/$/, "") + "/" +
      encoded.replace(/^\//, "") + query;
  }

  private async body(resp: Response): Promise<BodyResult> {
    const bytes = new Uint8Array(await resp.arrayBuffer());
    return {
      status: resp.status,
      ok: resp.ok,
      body: bytes,
      text: new TextDecoder().decode(bytes),
      contentType: resp.headers.get("Content-Type") ?? "",
    };
  }

  async getFile(path: string): Promise<BodyResult> {
    const resp = await fetch(this.url(path), { headers: this.headers() });
    return this.body(resp);
  }

  async listDirectory(path: string): Promise<ListingResult> {
    const resp = await fetch(this.url(path), {
      headers: this.headers({ Accept: "application/json" }),
    });
    let entries: ListingEntry[] = [];
    if (resp.ok) {
      entries = (await resp.json()) as ListingEntry[];
    } else {
      await resp.arrayBuffer(); // drain
    }
    return { status: resp.status, ok: resp.ok, entries };
  }

  async putFile(path: string, content: Uint8Array | string): Promise<ApiResult> {
    const resp = await fetch(this.url(path), {
      method: "PUT",
      headers: this.headers(),
      body: toBody(content),
    });
    await resp.arrayBuffer();
    return { status: resp.status, ok: resp.ok };
  }

  async deleteFile(path: string): Promise<ApiResult> {
    const resp = await fetch(this.url(path), {
      method: "DELETE",
      headers: this.headers(),
    });
    await resp.arrayBuffer();
    return { status: resp.status, ok: resp.ok };
  }

  async getAcl(path: string): Promise<AclResult> {
    const resp = await fetch(this.url(path, "?acl"), { headers: this.headers() });
    const result = await this.body(resp);
    return { ...result, source: resp.headers.get("X-Gacl-Source") ?? "" };
  }

  /** scope "file" writes a per-file override, "dir" the directory's .gacl. */
  async putAcl(path: string, xml: string,
               scope: "" | "file" | "dir" = ""): Promise<BodyResult> {
    const query = scope ? `?acl=${scope}` : "?acl";
    const resp = await fetch(this.url(path, query), {
      method: "PUT",
      headers: this.headers(),
      body: toBody(xml),
    });
    return this.body(resp);
  }

  async getHistory(path: string): Promise<HistoryResult> {
    const resp = await fetch(this.url(path, "?history"), {
      headers: this.headers(),
    });
    let records: HistoryRecord[] = [];
    if (resp.ok) {
      records = (await resp.json()) as HistoryRecord[];
    } else {
      await resp.arrayBuffer();
    }
    return { status: resp.status, ok: resp.ok, records };
  }

  async getVersion(path: string, version: string): Promise<BodyResult> {
    const resp = await fetch(this.url(path, `?version=${version}`), {
      headers: this.headers(),
    });
    return this.body(resp);
  }
}
