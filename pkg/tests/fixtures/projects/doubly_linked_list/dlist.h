#ifndef DLIST_H
#define DLIST_H

#include <stddef.h>

struct dnode {
    int value;
    struct dnode *prev;
    struct dnode *next;
};

struct dlist {
    struct dnode *head;
    struct dnode *tail;
    size_t length;
};

struct dlist *dlist_create(void);
int dlist_push_front(struct dlist *l, int value);
int dlist_push_back(struct dlist *l, int value);
int dlist_pop_front(struct dlist *l, int *out);
struct dnode *dlist_find(const struct dlist *l, int value);
int dlist_remove(struct dlist *l, struct dnode *n);
void dlist_destroy(struct dlist *l);
void dlist_print(const struct dlist *l);

#endif
