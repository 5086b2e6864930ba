/**
 * Single-page admin console. Hash routes:
 *
 *   #/browse/<path>    directory browser with upload / delete
 *   #/edit/<path>      plain-text file editor
 *   #/acl/<path>       form-based ACL editor
 *   #/group/<path>     dn-list group membership editor
 *   #/history/<path>   version history with preview and restore
 *
 * The UI makes no authorization decisions: it renders whatever the server
 * returns, and a 403 becomes a permission-denied panel rather than an
 * error. Client-side form validation only saves a round trip; the server
 * is the authority.
 */

import { ApiClient, Identity } from "./api.js";
import { AclFormModel, CREDENTIAL_KINDS, CredentialKind, EntryRow,
         PERMISSION_ORDER } from "./gaclForm.js";
import { DnListModel } from "./dnlist.js";

const app = document.getElementById("app") as HTMLElement;

function identityFromStorage(): Identity {
  try {
    return JSON.parse(sessionStorage.getItem("identity") ?? "{}");
  } catch {
    return {};
  }
}

let client = new ApiClient(window.location.origin, identityFromStorage());

// ---------------------------------------------------------------------------
// small DOM helpers

function el<K extends keyof HTMLElementTagNameMap>(
    tag: K, attrs: Record<string, string> = {},
    ...children: (Node | string)[]): HTMLElementTagNameMap[K] {
  const node = document.createElement(tag);
  for (const [k, v] of Object.entries(attrs)) node.setAttribute(k, v);
  node.append(...children);
  return node;
}

function render(...children: (Node | string)[]) {
  app.replaceChildren(identityBar(), ...children);
}

function deniedPanel(what: string): HTMLElement {
  return el("div", { class: "denied" },
    el("h2", {}, "Permission denied"),
    el("p", {}, `Your identity is not allowed to ${what}. ` +
      "Ask the area's administrator for access."));
}

function errorPanel(status: number, detail: string): HTMLElement {
  return el("div", { class: "error" },
    el("h2", {}, `Server error (${status})`), el("p", {}, detail));
}

function link(href: string, label: string): HTMLElement {
  return el("a", { href }, label);
}

function parentOf(path: string): string {
  const idx = path.replace(/\/$/, "").lastIndexOf("/");
  return idx <= 0 ? "" : path.slice(0, idx);
}

// ---------------------------------------------------------------------------
// identity bar (development mode passes dev headers; with TLS client
// certificates the browser supplies identity and these fields stay empty)

function identityBar(): HTMLElement {
  const dnInput = el("input", {
    type: "text", size: "48", placeholder: "/C=UK/O=Lab/CN=You",
    value: client.identity.dn ?? "",
  });
  const fqanInput = el("input", {
    type: "text", size: "32", placeholder: "/vo/group (space-separated)",
    value: (client.identity.fqans ?? []).join(" "),
  });
  const apply = el("button", {}, "Set identity");
  apply.onclick = () => {
    const identity: Identity = {
      dn: dnInput.value.trim() || undefined,
      fqans: fqanInput.value.trim() ? fqanInput.value.trim().split(/\s+/) : [],
    };
    sessionStorage.setItem("identity", JSON.stringify(identity));
    client = new ApiClient(window.location.origin, identity);
    route();
  };
  return el("div", { class: "identity-bar" },
    el("label", {}, "DN ", dnInput), " ",
    el("label", {}, "FQANs ", fqanInput), " ", apply);
}

// ---------------------------------------------------------------------------
// browse view

async function browseView(path: string) {
  const listing = await client.listDirectory(path);
  if (listing.status === 403) return render(deniedPanel(`list ${path || "/"}`));
  if (!listing.ok) return render(errorPanel(listing.status, `listing ${path}`));

  const rows: HTMLElement[] = [];
  for (const entry of listing.entries) {
    const childPath = path ? `${path}/${entry.name}` : entry.name;
    // Lightweight probe: a 200 from ?acl means this identity may
    // administer the item; the server decides, we just display.
    const aclProbe = await client.getAcl(childPath);
    const links: (Node | string)[] = [
      entry.kind === "directory"
        ? link(`#/browse/${childPath}`, entry.name + "/")
        : link(`#/edit/${childPath}`, entry.name),
    ];
    const actions = el("td", {});
    if (entry.kind === "file") {
      actions.append(link(`#/history/${childPath}`, "history"), " ");
      if (entry.name.endsWith(".dnlist")) {
        actions.append(link(`#/group/${childPath}`, "group"), " ");
      }
    }
    if (aclProbe.ok) actions.append(link(`#/acl/${childPath}`, "acl"), " ");
    const remove = el("button", {}, "delete");
    remove.onclick = async () => {
      const res = await client.deleteFile(childPath);
      if (!res.ok) alert(`delete failed (${res.status})`);
      route();
    };
    actions.append(remove);
    rows.push(el("tr", {},
      el("td", {}, ...links),
      el("td", {}, entry.kind === "file" ? String(entry.size) : ""),
      el("td", {}, aclProbe.ok ? "admin" : ""),
      actions));
  }

  const nameInput = el("input", { type: "text", placeholder: "new-file.txt" });
  const fileInput = el("input", { type: "file" });
  const upload = el("button", {}, "Upload");
  upload.onclick = async () => {
    const file = fileInput.files?.[0];
    const name = nameInput.value.trim() || file?.name;
    if (!name) return alert("choose a file or name");
    const bytes = file ? new Uint8Array(await file.arrayBuffer())
                       : new Uint8Array();
    const res = await client.putFile(path ? `${path}/${name}` : name, bytes);
    if (!res.ok) alert(`upload failed (${res.status})`);
    route();
  };

  render(
    el("h2", {}, "/" + path),
    path ? el("p", {}, link(`#/browse/${parentOf(path)}`, "up")) : "",
    el("table", { class: "listing" },
      el("tr", {}, el("th", {}, "name"), el("th", {}, "size"),
        el("th", {}, "rights"), el("th", {}, "actions")),
      ...rows),
    el("p", {}, link(`#/acl/${path}`, "directory ACL")),
    el("div", { class: "upload" }, nameInput, " ", fileInput, " ", upload));
}

// ---------------------------------------------------------------------------
// file editor with optimistic concurrency: remember the newest archived
// version at load time; if saving would race another editor's change,
// prompt to reload instead of silently clobbering.

async function latestVersion(path: string): Promise<string | null> {
  const history = await client.getHistory(path);
  return history.ok && history.records.length > 0
    ? history.records[history.records.length - 1].version : null;
}

async function editView(path: string) {
  const file = await client.getFile(path);
  if (file.status === 403) return render(deniedPanel(`read ${path}`));
  if (!file.ok) return render(errorPanel(file.status, `reading ${path}`));
  const baseVersion = await latestVersion(path);

  const area = el("textarea", { rows: "24", cols: "100" });
  area.value = file.text;
  const save = el("button", {}, "Save");
  save.onclick = async () => {
    const nowVersion = await latestVersion(path);
    if (nowVersion !== baseVersion &&
        !confirm("This document changed since you opened it. Overwrite?")) {
      return route();
    }
    const res = await client.putFile(path, area.value);
    if (res.status === 403) return render(deniedPanel(`write ${path}`));
    if (!res.ok) return alert(`save failed (${res.status})`);
    route();
  };
  render(
    el("h2", {}, "/" + path),
    el("p", {}, link(`#/browse/${parentOf(path)}`, "back"), " ",
      link(`#/history/${path}`, "history")),
    area, el("p", {}, save));
}

// ---------------------------------------------------------------------------
// ACL editor

function entryFieldset(entry: EntryRow, onRemove: () => void): HTMLElement {
  const credList = el("div", {});
  const renderCreds = () => {
    credList.replaceChildren(...entry.credentials.map((cred, i) => {
      const kindSelect = el("select", {});
      for (const kind of CREDENTIAL_KINDS) {
        const opt = el("option", { value: kind }, kind);
        if (kind === cred.kind) opt.setAttribute("selected", "");
        kindSelect.append(opt);
      }
      kindSelect.onchange = () => {
        cred.kind = kindSelect.value as CredentialKind;
      };
      const valueInput = el("input", { type: "text", size: "48",
                                       value: cred.value });
      valueInput.oninput = () => { cred.value = valueInput.value; };
      const drop = el("button", {}, "remove");
      drop.onclick = () => {
        entry.credentials.splice(i, 1);
        renderCreds();
      };
      return el("div", { class: "credential" },
        kindSelect, " ", valueInput, " ", drop);
    }));
  };
  renderCreds();
  const addCred = el("button", {}, "add credential");
  addCred.onclick = () => {
    entry.credentials.push({ kind: "person", value: "" });
    renderCreds();
  };

  const permBoxes = (block: "allow" | "deny") =>
    el("span", { class: block },
      block + ": ",
      ...PERMISSION_ORDER.map((perm) => {
        const box = el("input", { type: "checkbox" });
        box.checked = entry[block].has(perm);
        box.onchange = () => {
          if (box.checked) entry[block].add(perm);
          else entry[block].delete(perm);
        };
        return el("label", {}, box, perm, " ");
      }));

  const dropEntry = el("button", {}, "remove entry");
  dropEntry.onclick = onRemove;
  return el("fieldset", { class: "entry" },
    credList, addCred, el("div", {}, permBoxes("allow"), " ", permBoxes("deny")),
    dropEntry);
}

async function aclView(path: string) {
  const acl = await client.getAcl(path);
  if (acl.status === 403) return render(deniedPanel(`administer ${path || "/"}`));
  if (!acl.ok) return render(errorPanel(acl.status, `fetching ACL for ${path}`));

  let model: AclFormModel;
  try {
    model = AclFormModel.parse(acl.text);
  } catch (exc) {
    return render(errorPanel(500, `unparseable ACL: ${exc}`));
  }

  const form = el("div", {});
  const problems = el("p", { class: "problems" });
  const renderEntries = () => {
    form.replaceChildren(...model.entries.map((entry, i) =>
      entryFieldset(entry, () => {
        model.entries.splice(i, 1);
        renderEntries();
      })));
  };
  renderEntries();

  const addEntry = el("button", {}, "add entry");
  addEntry.onclick = () => {
    model.entries.push({ credentials: [{ kind: "person", value: "" }],
                         allow: new Set(), deny: new Set() });
    renderEntries();
  };

  const save = el("button", {}, "Save ACL");
  save.onclick = async () => {
    const errors = model.validate();
    if (errors.length > 0) {
      problems.textContent = errors.join("; ");
      return; // caught locally, but the server would reject it too
    }
    const res = await client.putAcl(path, model.serialize());
    if (res.status === 409) {
      problems.textContent = "Blocked: this change would remove your own " +
        "admin right, locking you out. " + res.text.trim();
      return;
    }
    if (res.status === 403) return render(deniedPanel(`administer ${path}`));
    if (!res.ok) {
      problems.textContent = `server rejected the ACL (${res.status}): ${res.text}`;
      return;
    }
    route();
  };

  render(
    el("h2", {}, `ACL for /${path}`),
    el("p", {}, `source: ${acl.source}`),
    form, el("p", {}, addEntry, " ", save), problems);
}

// ---------------------------------------------------------------------------
// group editor

async function groupView(path: string) {
  const file = await client.getFile(path);
  if (file.status === 403) return render(deniedPanel(`read group ${path}`));
  if (!file.ok) return render(errorPanel(file.status, `reading ${path}`));
  const model = DnListModel.parse(file.text);

  const area = el("textarea", { rows: "16", cols: "100" });
  area.value = model.serialize();
  const save = el("button", {}, "Save members");
  const note = el("p", {});
  save.onclick = async () => {
    const res = await client.putFile(path, area.value);
    if (res.status === 403) return render(deniedPanel(`edit group ${path}`));
    if (!res.ok) return alert(`save failed (${res.status})`);
    note.textContent = "Saved. Membership applies from the next request.";
  };
  render(
    el("h2", {}, `Group /${path}`),
    el("p", {}, `${model.members().length} members; ` +
      "# lines are comments and are kept as-is"),
    area, el("p", {}, save), note);
}

// ---------------------------------------------------------------------------
// history view

async function historyView(path: string) {
  const history = await client.getHistory(path);
  if (history.status === 403) return render(deniedPanel(`read ${path}`));
  if (!history.ok) return render(errorPanel(history.status, `history of ${path}`));

  const preview = el("pre", { class: "preview" });
  const rows = history.records.map((record) => {
    const show = el("button", {}, "preview");
    show.onclick = async () => {
      const version = await client.getVersion(path, record.version);
      preview.textContent = version.ok ? version.text
                                       : `unavailable (${version.status})`;
    };
    const restore = el("button", {}, "restore");
    restore.onclick = async () => {
      const version = await client.getVersion(path, record.version);
      if (!version.ok) return alert(`fetch failed (${version.status})`);
      // Restoring is an ordinary PUT, so the current content is archived
      // first and the restore itself becomes part of the history.
      const res = await client.putFile(path, version.body);
      if (!res.ok) return alert(`restore failed (${res.status})`);
      route();
    };
    return el("tr", {},
      el("td", {}, record.version),
      el("td", {}, new Date(record.timestamp * 1000).toISOString()),
      el("td", {}, record.author ?? "(unknown)"),
      el("td", {}, String(record.size)),
      el("td", {}, show, " ", restore));
  });

  render(
    el("h2", {}, `History of /${path}`),
    el("p", {}, link(`#/browse/${parentOf(path)}`, "back")),
    rows.length === 0
      ? el("p", {}, "No archived versions yet.")
      : el("table", { class: "listing" },
          el("tr", {}, el("th", {}, "version"), el("th", {}, "when"),
            el("th", {}, "author"), el("th", {}, "size"), el("th", {}, "")),
          ...rows),
    preview);
}

// ---------------------------------------------------------------------------

function route() {
  const hash = window.location.hash || "#/browse/";
  const match = /^#\/(browse|edit|acl|group|history)\/(.*)$/.exec(hash);
  if (!match) {
    window.location.hash = "#/browse/";
    return;
  }
  const [, view, rawPath] = match;
  const path = decodeURIComponent(rawPath).replace(/\/+$/, "");
  ({ browse: browseView, edit: editView, acl: aclView,
     group: groupView, history: historyView }[view] as
     (p: string) => Promise<void>)(path)
    .catch((exc) => render(errorPanel(0, String(exc))));
}

window.addEventListener("hashchange", route);
route();
